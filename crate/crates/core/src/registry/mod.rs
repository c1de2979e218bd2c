//! The registry engine: prefix buckets of BK-trees kept in lock-step with the
//! commitment trie and ledger, plus the verification decision procedure.
//!
//! Verification of a query hash `q`:
//!
//! 1. search the home bucket (`extract_prefix(q)`); a distance-0 hit returns
//!    [`Outcome::ExactMatch`] immediately;
//! 2. otherwise search every bucket returned by
//!    [`enumerate_neighbors`](crate::prefix::enumerate_neighbors) and take the
//!    minimum distance `d_min` over all their entries (ties go to the smallest
//!    entry id);
//! 3. `d_min <= tau` is a [`Outcome::PotentialMatch`], anything else
//!    [`Outcome::NonMatch`].

mod entry;
mod snapshot;

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bktree::{BkTree, EntryId, Hit, SearchStats};
use crate::commitment::{
    bucket_digest, entry_digest, verify_inclusion, CommitmentError, CommitmentTrie, Digest,
    InclusionProof, Ledger, LeafRecord,
};
use crate::hashing::{similarity_score, PerceptualHash, SimilarityScore, HASH_BITS};
use crate::prefix::{
    enumerate_neighbors, extract_prefix, PrefixError, PrefixKey, PrefixScheme, BUCKET_COUNT,
    MAX_FLIP_TOLERANCE,
};

pub use entry::{timestamp, EntryMetadata, RegistryEntry, MAX_PLATFORM_ID_LEN};
pub use snapshot::{HEADER_FILE, LEDGER_FILE, BUCKET_DIR};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Prefix(#[from] PrefixError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error("storage error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("a registry already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error(transparent)]
    Commitment(#[from] CommitmentError),
}

/// Per-instance settings, fixed at creation and recorded in snapshots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryConfig {
    pub scheme: PrefixScheme,
    /// Prefix bits allowed to differ when expanding to neighbor buckets.
    pub flip_tolerance: u32,
    /// Hamming threshold separating potential matches from non-matches.
    pub tau: u32,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self {
            scheme: PrefixScheme::Discontinuous,
            flip_tolerance: 2,
            tau: 6,
        }
    }
}

impl RegistryConfig {
    pub fn new(scheme: PrefixScheme, flip_tolerance: u32, tau: u32) -> Result<Self, RegistryError> {
        let cfg = Self {
            scheme,
            flip_tolerance,
            tau,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        check_params(self.flip_tolerance, self.tau)
    }
}

fn check_params(flip_tolerance: u32, tau: u32) -> Result<(), RegistryError> {
    if flip_tolerance > MAX_FLIP_TOLERANCE {
        return Err(PrefixError::ToleranceOutOfRange(flip_tolerance).into());
    }
    if tau > HASH_BITS {
        return Err(RegistryError::InvalidInput(format!(
            "tau {tau} outside [0, 64]"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    ExactMatch,
    PotentialMatch,
    NonMatch,
}

impl Outcome {
    pub fn is_match(self) -> bool {
        !matches!(self, Outcome::NonMatch)
    }
}

/// Result of a verification query.
///
/// JSON field names are stable: `outcome`, `prefix`, `min_distance`,
/// `similarity`, `matched` (an entry, or null), `buckets_searched`,
/// `candidates_checked`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub prefix: PrefixKey,
    /// Smallest distance among the searched candidates, if there were any.
    pub min_distance: Option<u32>,
    /// Present for matches only.
    pub similarity: Option<SimilarityScore>,
    pub matched: Option<RegistryEntry>,
    pub buckets_searched: usize,
    /// Entries held in the searched buckets.
    pub candidates_checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistryStats {
    pub total_entries: usize,
    pub nonempty_buckets: usize,
    /// Total entries over the full key space of 65,536 buckets.
    pub mean_occupancy: f64,
    pub max_occupancy: usize,
    /// occupancy -> number of non-empty buckets with that occupancy
    pub occupancy_histogram: BTreeMap<usize, usize>,
}

/// Where a persistent registry lives and how much of its ledger is on disk.
#[derive(Clone, Debug)]
struct Store {
    dir: PathBuf,
    persisted_ledger: usize,
}

pub struct Registry {
    config: RegistryConfig,
    entries: Vec<RegistryEntry>,
    entry_digests: Vec<Digest>,
    buckets: Vec<BkTree>,
    trie: CommitmentTrie,
    ledger: Ledger,
    store: Option<Store>,
}

impl Registry {
    /// An in-memory registry.
    pub fn new(config: RegistryConfig) -> Result<Self, RegistryError> {
        config.validate()?;
        Ok(Self {
            config,
            entries: Vec::new(),
            entry_digests: Vec::new(),
            buckets: vec![BkTree::new(); BUCKET_COUNT],
            trie: CommitmentTrie::new(),
            ledger: Ledger::new(),
            store: None,
        })
    }

    pub fn config(&self) -> &RegistryConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> Option<&RegistryEntry> {
        self.entries.get(id.0 as usize)
    }

    pub fn bucket(&self, prefix: PrefixKey) -> &BkTree {
        &self.buckets[prefix.index()]
    }

    pub fn root(&self) -> Digest {
        self.trie.root()
    }

    pub fn trie(&self) -> &CommitmentTrie {
        &self.trie
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn directory(&self) -> Option<&std::path::Path> {
        self.store.as_ref().map(|s| s.dir.as_path())
    }

    pub fn prefix_of(&self, hash: PerceptualHash) -> PrefixKey {
        extract_prefix(hash, self.config.scheme)
    }

    pub fn register(
        &mut self,
        hash: PerceptualHash,
        meta: EntryMetadata,
    ) -> Result<RegistryEntry, RegistryError> {
        meta.validate().map_err(RegistryError::InvalidInput)?;
        let entry = RegistryEntry {
            entry_id: EntryId(self.entries.len() as u64),
            hash,
            created_at: timestamp::truncate(meta.created_at.unwrap_or_else(Utc::now)),
            platform_id: meta.platform_id,
            extra: meta.extra,
        };
        let edigest = entry_digest(&entry.canonical_bytes());
        let prefix = self.prefix_of(hash);

        if self.store.is_none() {
            self.buckets[prefix.index()].insert(hash, entry.entry_id);
            let digest = self.digest_bucket(&self.buckets[prefix.index()], Some(edigest));
            let up = self.trie.update(prefix, digest);
            self.ledger
                .append(entry.created_at, prefix, up.commitment.version, up.root);
            self.entries.push(entry.clone());
            self.entry_digests.push(edigest);
            return Ok(entry);
        }

        // Persistent path: stage every effect, write, then publish.
        let mut tree = self.buckets[prefix.index()].clone();
        tree.insert(hash, entry.entry_id);
        let digest = self.digest_bucket(&tree, Some(edigest));
        let prev_leaf = self.trie.get(prefix).copied();
        let up = self.trie.update(prefix, digest);
        let record =
            self.ledger
                .next_record(entry.created_at, prefix, up.commitment.version, up.root);

        let written = {
            let lookup = |id: EntryId| {
                if id == entry.entry_id {
                    &entry
                } else {
                    &self.entries[id.0 as usize]
                }
            };
            snapshot::persist_registration(
                self.store.as_ref().expect("checked above"),
                &self.config,
                prefix,
                &tree,
                &up.commitment,
                &lookup,
                &record,
                (self.entries.len() + 1, self.trie.len()),
            )
        };
        if let Err(e) = written {
            self.trie.reset_leaf(prefix, prev_leaf);
            return Err(e);
        }

        self.buckets[prefix.index()] = tree;
        self.ledger.push(record)?;
        if let Some(store) = self.store.as_mut() {
            store.persisted_ledger = self.ledger.len();
        }
        self.entries.push(entry.clone());
        self.entry_digests.push(edigest);
        Ok(entry)
    }

    /// Bucket digest over the tree's entries. `pending` supplies the digest
    /// of an entry that is not yet in `entry_digests`.
    fn digest_bucket(&self, tree: &BkTree, pending: Option<Digest>) -> Digest {
        let mut records: Vec<LeafRecord> = tree
            .entries()
            .map(|(hash, entry)| LeafRecord {
                hash,
                entry,
                entry_digest: self
                    .entry_digests
                    .get(entry.0 as usize)
                    .copied()
                    .or(pending)
                    .expect("every stored entry has a digest"),
            })
            .collect();
        bucket_digest(&mut records)
    }

    /// Verify with the configured tolerance and threshold.
    pub fn verify(&self, hash: PerceptualHash) -> Verdict {
        self.search(hash, self.config.flip_tolerance, self.config.tau)
    }

    /// Verify with a per-query tolerance and threshold.
    pub fn verify_with(
        &self,
        hash: PerceptualHash,
        flip_tolerance: u32,
        tau: u32,
    ) -> Result<Verdict, RegistryError> {
        check_params(flip_tolerance, tau)?;
        Ok(self.search(hash, flip_tolerance, tau))
    }

    fn search(&self, q: PerceptualHash, flip_tolerance: u32, tau: u32) -> Verdict {
        let home = self.prefix_of(q);
        let mut stats = SearchStats::default();
        let home_tree = &self.buckets[home.index()];
        let mut best: Option<Hit> = home_tree.nearest_within(q, HASH_BITS, &mut stats);
        let mut buckets_searched = 1;
        let mut candidates_checked = home_tree.len();

        if best.is_none_or(|b| b.distance > 0) {
            let neighbors = enumerate_neighbors(home, flip_tolerance)
                .expect("tolerance validated by caller");
            for key in neighbors.into_iter().skip(1) {
                let tree = &self.buckets[key.index()];
                buckets_searched += 1;
                candidates_checked += tree.len();
                let bound = best.map_or(HASH_BITS, |b| b.distance);
                if let Some(hit) = tree.nearest_within(q, bound, &mut stats) {
                    if best.is_none_or(|b| (hit.distance, hit.entry) < (b.distance, b.entry)) {
                        best = Some(hit);
                    }
                }
            }
        }

        let min_distance = best.map(|b| b.distance);
        let outcome = match min_distance {
            Some(0) => Outcome::ExactMatch,
            Some(d) if d <= tau => Outcome::PotentialMatch,
            _ => Outcome::NonMatch,
        };
        let (similarity, matched) = match (outcome, best) {
            (Outcome::NonMatch, _) | (_, None) => (None, None),
            (_, Some(hit)) => (
                Some(similarity_score(hit.distance).expect("distance within 64")),
                self.entry(hit.entry).cloned(),
            ),
        };
        Verdict {
            outcome,
            prefix: home,
            min_distance,
            similarity,
            matched,
            buckets_searched,
            candidates_checked,
        }
    }

    pub fn stats(&self) -> RegistryStats {
        let mut histogram = BTreeMap::new();
        let mut nonempty = 0;
        let mut max = 0;
        for b in &self.buckets {
            if !b.is_empty() {
                nonempty += 1;
                max = max.max(b.len());
                *histogram.entry(b.len()).or_insert(0) += 1;
            }
        }
        RegistryStats {
            total_entries: self.entries.len(),
            nonempty_buckets: nonempty,
            mean_occupancy: self.entries.len() as f64 / BUCKET_COUNT as f64,
            max_occupancy: max,
            occupancy_histogram: histogram,
        }
    }

    pub fn prove(&self, prefix: PrefixKey) -> Result<InclusionProof, RegistryError> {
        self.trie.prove(prefix).map_err(|e| match e {
            CommitmentError::NotFound(p) => RegistryError::NotFound(format!("bucket {p}")),
            other => other.into(),
        })
    }

    /// Recompute every bucket digest and check it against the committed
    /// leaf, the trie root against the ledger head, and the ledger chain.
    pub fn check_integrity(&self) -> Result<(), RegistryError> {
        self.ledger.verify_chain()?;
        for (idx, tree) in self.buckets.iter().enumerate() {
            let prefix = PrefixKey(idx as u16);
            let committed = self.trie.get(prefix);
            match (tree.is_empty(), committed) {
                (true, None) => continue,
                (true, Some(_)) | (false, None) => {
                    return Err(RegistryError::Integrity(format!(
                        "bucket {prefix} and its commitment disagree on presence"
                    )))
                }
                (false, Some(c)) => {
                    if self.digest_bucket(tree, None) != c.digest {
                        return Err(RegistryError::Integrity(format!(
                            "bucket {prefix} digest does not match its commitment"
                        )));
                    }
                    let proof = self.trie.prove(prefix)?;
                    if !verify_inclusion(&proof, &self.ledger_root()) {
                        return Err(RegistryError::Integrity(format!(
                            "bucket {prefix} not included under the ledger root"
                        )));
                    }
                }
            }
        }
        if self.trie.root() != self.ledger_root() {
            return Err(RegistryError::Integrity(
                "trie root differs from the latest ledger root".into(),
            ));
        }
        Ok(())
    }

    /// Root named by the latest ledger record, or the empty-trie root.
    pub fn ledger_root(&self) -> Digest {
        self.ledger
            .latest()
            .map(|r| r.root)
            .unwrap_or_else(|| CommitmentTrie::new().root())
    }

    /// Bypass the API and overwrite a stored hash in memory. Only for
    /// exercising tamper detection.
    #[doc(hidden)]
    pub fn tamper_stored_hash(&mut self, id: EntryId, hash: PerceptualHash) {
        let old = self.entries[id.0 as usize].hash;
        let prefix = self.prefix_of(old);
        let tree = &self.buckets[prefix.index()];
        let mut rebuilt = BkTree::new();
        let mut items: Vec<(PerceptualHash, EntryId)> = tree.entries().collect();
        items.sort_by_key(|&(_, e)| e);
        for (h, e) in items {
            rebuilt.insert(if e == id { hash } else { h }, e);
        }
        self.buckets[prefix.index()] = rebuilt;
        self.entries[id.0 as usize].hash = hash;
    }
}

#[cfg(test)]
mod tests;
