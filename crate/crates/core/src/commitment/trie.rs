use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::proof::InclusionProof;
use super::{sha256, CommitmentError, Digest};
use crate::prefix::PrefixKey;

const EMPTY_TRIE_TAG: &[u8] = b"phashreg/trie/empty/v1";
const LEAF_TAG: &[u8] = b"phashreg/trie/leaf/v1";
const NODE_TAG: &[u8] = b"phashreg/trie/node/v1";

/// Trie depth: one level per prefix nibble.
pub const DEPTH: usize = 4;

/// Marker standing in for an absent child.
pub(crate) const ABSENT: Digest = Digest::ZERO;

pub(crate) fn empty_root() -> Digest {
    sha256(&[EMPTY_TRIE_TAG])
}

pub(crate) fn leaf_hash(prefix: PrefixKey, bucket: &Digest) -> Digest {
    sha256(&[LEAF_TAG, &prefix.0.to_be_bytes(), &bucket.0])
}

/// Internal node at `level` (0 = root) over its 16 ordered child digests.
pub(crate) fn node_hash(level: u8, children: &[Digest; 16]) -> Digest {
    let mut parts: Vec<&[u8]> = Vec::with_capacity(18);
    parts.push(NODE_TAG);
    let lvl = [level];
    parts.push(&lvl);
    for c in children {
        parts.push(&c.0);
    }
    sha256(&parts)
}

/// The committed state of one bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCommitment {
    pub prefix: PrefixKey,
    pub digest: Digest,
    /// Number of digest changes applied to this bucket.
    pub version: u64,
}

/// Outcome of one [`CommitmentTrie::update`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RootUpdate {
    pub root: Digest,
    pub commitment: BucketCommitment,
}

/// Fixed-depth 16-ary Merkle trie keyed by [`PrefixKey`].
///
/// `levels[l]` maps the first `l` nibbles of a path (as an integer) to the
/// digest of the node there; `levels[0]` holds the root and `levels[DEPTH]`
/// the leaf-node hashes.
#[derive(Clone, Debug)]
pub struct CommitmentTrie {
    leaves: BTreeMap<u16, BucketCommitment>,
    levels: [HashMap<u32, Digest>; DEPTH + 1],
}

impl Default for CommitmentTrie {
    fn default() -> Self {
        Self::new()
    }
}

impl CommitmentTrie {
    pub fn new() -> Self {
        Self {
            leaves: BTreeMap::new(),
            levels: Default::default(),
        }
    }

    /// Rebuild from `(prefix, digest, version)` triples.
    pub fn from_commitments(items: impl IntoIterator<Item = BucketCommitment>) -> Self {
        let mut trie = Self::new();
        for c in items {
            trie.leaves.insert(c.prefix.0, c);
        }
        let keys: Vec<u16> = trie.leaves.keys().copied().collect();
        for k in keys {
            trie.rehash_path(PrefixKey(k));
        }
        trie
    }

    pub fn root(&self) -> Digest {
        self.levels[0].get(&0).copied().unwrap_or_else(empty_root)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn get(&self, prefix: PrefixKey) -> Option<&BucketCommitment> {
        self.leaves.get(&prefix.0)
    }

    pub fn commitments(&self) -> impl Iterator<Item = &BucketCommitment> {
        self.leaves.values()
    }

    /// Set the bucket digest for `prefix`. The version advances only when the
    /// digest actually changes; re-applying the current digest is a no-op on
    /// the root.
    pub fn update(&mut self, prefix: PrefixKey, digest: Digest) -> RootUpdate {
        let entry = self.leaves.entry(prefix.0).or_insert(BucketCommitment {
            prefix,
            digest,
            version: 0,
        });
        if entry.version == 0 || entry.digest != digest {
            entry.digest = digest;
            entry.version += 1;
        }
        let commitment = *entry;
        self.rehash_path(prefix);
        RootUpdate {
            root: self.root(),
            commitment,
        }
    }

    fn child_digest(&self, level: usize, path: u32) -> Digest {
        self.levels[level].get(&path).copied().unwrap_or(ABSENT)
    }

    /// The 16 child digests of the node at (`level`, `path`).
    pub(crate) fn children_of(&self, level: usize, path: u32) -> [Digest; 16] {
        let mut out = [ABSENT; 16];
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = self.child_digest(level + 1, (path << 4) | n as u32);
        }
        out
    }

    fn rehash_path(&mut self, prefix: PrefixKey) {
        let full = u32::from(prefix.0);
        let leaf = &self.leaves[&prefix.0];
        self.levels[DEPTH].insert(full, leaf_hash(leaf.prefix, &leaf.digest));
        for level in (0..DEPTH).rev() {
            let path = full >> (4 * (DEPTH - level));
            let children = self.children_of(level, path);
            if children.iter().all(|c| *c == ABSENT) {
                self.levels[level].remove(&path);
            } else {
                self.levels[level].insert(path, node_hash(level as u8, &children));
            }
        }
    }

    /// Put a leaf back to an earlier state, or remove it.
    pub(crate) fn reset_leaf(&mut self, prefix: PrefixKey, prev: Option<BucketCommitment>) {
        match prev {
            Some(c) => {
                self.leaves.insert(prefix.0, c);
                self.rehash_path(prefix);
            }
            None => {
                self.leaves.remove(&prefix.0);
                let full = u32::from(prefix.0);
                self.levels[DEPTH].remove(&full);
                for level in (0..DEPTH).rev() {
                    let path = full >> (4 * (DEPTH - level));
                    let children = self.children_of(level, path);
                    if children.iter().all(|c| *c == ABSENT) {
                        self.levels[level].remove(&path);
                    } else {
                        self.levels[level].insert(path, node_hash(level as u8, &children));
                    }
                }
            }
        }
    }

    pub fn prove(&self, prefix: PrefixKey) -> Result<InclusionProof, CommitmentError> {
        let leaf = self
            .leaves
            .get(&prefix.0)
            .ok_or(CommitmentError::NotFound(prefix))?;
        let full = u32::from(prefix.0);
        let nibbles = prefix.nibbles();
        let siblings = (0..DEPTH)
            .map(|level| {
                let path = full >> (4 * (DEPTH - level));
                let children = self.children_of(level, path);
                let own = nibbles[level] as usize;
                children
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != own)
                    .map(|(_, d)| *d)
                    .collect()
            })
            .collect();
        Ok(InclusionProof {
            prefix,
            siblings,
            bucket_digest: leaf.digest,
            root: self.root(),
        })
    }
}
