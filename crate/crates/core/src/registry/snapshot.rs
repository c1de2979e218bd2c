//! On-disk layout:
//!
//! ```text
//! <dir>/registry.json        header: format, config, entry count, root
//! <dir>/buckets/XXXX.jsonl   one file per non-empty bucket
//! <dir>/ledger.log           digest-chained root records
//! ```
//!
//! A bucket file starts with `{"prefix","version","digest","entries"}` and
//! continues with one JSON object per BK-tree node in pre-order:
//! `{"edge","hash","children","entries":[...]}`.
//!
//! The ledger append is the commit point of a registration. On restore, any
//! entry whose id has no ledger record is rolled back, and everything else
//! must reproduce the ledger's latest root exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Registry, RegistryConfig, RegistryEntry, RegistryError, Store};
use crate::bktree::{BkTree, EntryId, NodeRecord};
use crate::commitment::{
    entry_digest, BucketCommitment, CommitmentTrie, Digest, Ledger, LedgerRecord,
};
use crate::prefix::{extract_prefix, PrefixKey, BUCKET_COUNT};

pub const HEADER_FILE: &str = "registry.json";
pub const LEDGER_FILE: &str = "ledger.log";
pub const BUCKET_DIR: &str = "buckets";

const FORMAT: &str = "phashreg-snapshot/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    config: RegistryConfig,
    entries: usize,
    buckets: usize,
    root: Digest,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BucketHeader {
    prefix: PrefixKey,
    version: u64,
    digest: Digest,
    entries: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeLine {
    edge: u8,
    hash: crate::hashing::PerceptualHash,
    children: usize,
    entries: Vec<RegistryEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn integrity(msg: impl Into<String>) -> RegistryError {
    RegistryError::Integrity(msg.into())
}

fn bucket_path(dir: &Path, prefix: PrefixKey) -> PathBuf {
    dir.join(BUCKET_DIR).join(format!("{prefix}.jsonl"))
}

/// Write `bytes` to a sibling temp file, sync, and rename over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RegistryError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn encode_bucket<'a>(
    tree: &BkTree,
    commitment: &BucketCommitment,
    lookup: &dyn Fn(EntryId) -> &'a RegistryEntry,
) -> Vec<u8> {
    let mut out = Vec::new();
    let header = BucketHeader {
        prefix: commitment.prefix,
        version: commitment.version,
        digest: commitment.digest,
        entries: tree.len(),
    };
    serde_json::to_writer(&mut out, &header).expect("in-memory write");
    out.push(b'\n');
    for rec in tree.preorder() {
        let line = NodeLine {
            edge: rec.edge,
            hash: rec.hash,
            children: rec.child_count,
            entries: rec.payloads.iter().map(|&id| lookup(id).clone()).collect(),
        };
        serde_json::to_writer(&mut out, &line).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

fn encode_header(config: &RegistryConfig, entries: usize, buckets: usize, root: Digest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&Header {
        format: FORMAT.into(),
        config: *config,
        entries,
        buckets,
        root,
    })
    .expect("in-memory write");
    out.push(b'\n');
    out
}

/// Durably record one registration: bucket file, then the ledger line
/// (commit point), then the header.
#[allow(clippy::too_many_arguments)]
pub(super) fn persist_registration<'a>(
    store: &Store,
    config: &RegistryConfig,
    prefix: PrefixKey,
    tree: &BkTree,
    commitment: &BucketCommitment,
    lookup: &dyn Fn(EntryId) -> &'a RegistryEntry,
    record: &LedgerRecord,
    (entry_count, bucket_count): (usize, usize),
) -> Result<(), RegistryError> {
    let dir = &store.dir;
    write_atomic(&bucket_path(dir, prefix), &encode_bucket(tree, commitment, lookup))?;

    let ledger_path = dir.join(LEDGER_FILE);
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&ledger_path)
        .map_err(io_err(&ledger_path))?;
    writeln!(f, "{}", record.to_line()).map_err(io_err(&ledger_path))?;
    f.sync_data().map_err(io_err(&ledger_path))?;

    let header = encode_header(config, entry_count, bucket_count, record.root);
    write_atomic(&dir.join(HEADER_FILE), &header)
}

impl Registry {
    /// Create an empty persistent registry in `dir`.
    pub fn create(dir: impl AsRef<Path>, config: RegistryConfig) -> Result<Self, RegistryError> {
        let dir = dir.as_ref();
        if dir.join(HEADER_FILE).exists() {
            return Err(RegistryError::AlreadyExists(dir.to_path_buf()));
        }
        let mut reg = Registry::new(config)?;
        reg.snapshot(dir)?;
        reg.store = Some(Store {
            dir: dir.to_path_buf(),
            persisted_ledger: 0,
        });
        Ok(reg)
    }

    /// Restore the registry in `dir` and keep writing registrations to it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let dir = dir.as_ref();
        let (mut reg, repairs) = restore_inner(dir)?;
        reg.store = Some(Store {
            dir: dir.to_path_buf(),
            persisted_ledger: reg.ledger.len(),
        });
        if !repairs.is_empty() {
            for prefix in repairs {
                let path = bucket_path(dir, prefix);
                match reg.trie.get(prefix) {
                    Some(c) => {
                        let bytes = encode_bucket(reg.bucket(prefix), c, &|id| {
                            &reg.entries[id.0 as usize]
                        });
                        write_atomic(&path, &bytes)?;
                    }
                    None => fs::remove_file(&path).map_err(io_err(&path))?,
                }
            }
            let header = encode_header(&reg.config, reg.len(), reg.trie.len(), reg.root());
            write_atomic(&dir.join(HEADER_FILE), &header)?;
        }
        Ok(reg)
    }

    /// Load a snapshot without binding to its directory.
    pub fn restore(dir: impl AsRef<Path>) -> Result<Self, RegistryError> {
        restore_inner(dir.as_ref()).map(|(reg, _)| reg)
    }

    /// Write the full state to `dir`, replacing any snapshot already there.
    pub fn snapshot(&self, dir: impl AsRef<Path>) -> Result<(), RegistryError> {
        let dir = dir.as_ref();
        let bdir = dir.join(BUCKET_DIR);
        fs::create_dir_all(&bdir).map_err(io_err(&bdir))?;
        for item in fs::read_dir(&bdir).map_err(io_err(&bdir))? {
            let path = item.map_err(io_err(&bdir))?.path();
            if path.extension().is_some_and(|e| e == "jsonl" || e == "tmp") {
                fs::remove_file(&path).map_err(io_err(&path))?;
            }
        }
        let lookup = |id: EntryId| &self.entries[id.0 as usize];
        for c in self.trie.commitments() {
            let path = bucket_path(dir, c.prefix);
            let bytes = encode_bucket(self.bucket(c.prefix), c, &lookup);
            let mut w = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
            w.write_all(&bytes).map_err(io_err(&path))?;
            w.flush().map_err(io_err(&path))?;
        }
        let ledger_path = dir.join(LEDGER_FILE);
        self.ledger.write_file(&ledger_path)?;
        let header = encode_header(&self.config, self.len(), self.trie.len(), self.root());
        write_atomic(&dir.join(HEADER_FILE), &header)
    }
}

struct LoadedBucket {
    prefix: PrefixKey,
    header: BucketHeader,
    nodes: Vec<NodeRecord>,
    entries: Vec<RegistryEntry>,
}

fn read_bucket(path: &Path) -> Result<LoadedBucket, RegistryError> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| integrity(format!("bad bucket file name {}", path.display())))?;
    let prefix = PrefixKey::from_hex(name)
        .map_err(|_| integrity(format!("bad bucket file name {}", path.display())))?;
    let reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut lines = reader.lines();
    let bad = |what: String| integrity(format!("bucket {prefix}: {what}"));

    let first = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .map_err(io_err(path))?;
    let header: BucketHeader =
        serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
    if header.prefix != prefix {
        return Err(bad(format!("header names prefix {}", header.prefix)));
    }
    let mut nodes = Vec::new();
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        let node: NodeLine =
            serde_json::from_str(&line).map_err(|e| bad(format!("node {i}: {e}")))?;
        if node.entries.is_empty() {
            return Err(bad(format!("node {i} has no entries")));
        }
        for e in &node.entries {
            if e.hash != node.hash {
                return Err(bad(format!("entry {} hash differs from its node", e.entry_id)));
            }
        }
        nodes.push(NodeRecord {
            edge: node.edge,
            hash: node.hash,
            payloads: node.entries.iter().map(|e| e.entry_id).collect(),
            child_count: node.children,
        });
        entries.extend(node.entries);
    }
    Ok(LoadedBucket {
        prefix,
        header,
        nodes,
        entries,
    })
}

/// Restore and report which bucket files needed a rollback.
fn restore_inner(dir: &Path) -> Result<(Registry, Vec<PrefixKey>), RegistryError> {
    let header_path = dir.join(HEADER_FILE);
    if !header_path.exists() {
        return Err(RegistryError::NotFound(format!(
            "no registry at {}",
            dir.display()
        )));
    }
    let text = fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| integrity(format!("header: {e}")))?;
    if header.format != FORMAT {
        return Err(integrity(format!("unknown format {:?}", header.format)));
    }
    header.config.validate()?;
    let config = header.config;

    let ledger = Ledger::load(&dir.join(LEDGER_FILE))
        .map_err(|e| integrity(format!("ledger: {e}")))?;
    let committed = ledger.len();
    if header.entries > committed {
        return Err(integrity(format!(
            "header claims {} entries but the ledger holds {committed}",
            header.entries
        )));
    }

    let mut reg = Registry::new(config)?;
    let mut slots: Vec<Option<RegistryEntry>> = vec![None; committed];
    let mut commitments = Vec::new();
    let mut repairs = Vec::new();

    let bdir = dir.join(BUCKET_DIR);
    let mut files: Vec<PathBuf> = match fs::read_dir(&bdir) {
        Ok(rd) => rd
            .map(|r| r.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err(&bdir))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(&bdir)(e)),
    };
    files.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    files.sort();
    if files.len() > BUCKET_COUNT {
        return Err(integrity("more bucket files than prefixes"));
    }

    for path in files {
        let b = read_bucket(&path)?;
        let prefix = b.prefix;
        let mut by_id: BTreeMap<EntryId, RegistryEntry> = BTreeMap::new();
        let mut rolled_back = false;
        for e in b.entries {
            if extract_prefix(e.hash, config.scheme) != prefix {
                return Err(integrity(format!(
                    "entry {} hash {} does not belong in bucket {prefix}",
                    e.entry_id, e.hash
                )));
            }
            if e.entry_id.0 as usize >= committed {
                rolled_back = true;
                continue;
            }
            if by_id.insert(e.entry_id, e).is_some() {
                return Err(integrity(format!("duplicate entry in bucket {prefix}")));
            }
        }

        let tree = if rolled_back {
            repairs.push(prefix);
            // trees are built in registration order, so replaying the
            // committed entries reproduces the committed shape
            let mut t = BkTree::new();
            for (id, e) in &by_id {
                t.insert(e.hash, *id);
            }
            t
        } else {
            let t = BkTree::from_preorder(&b.nodes)
                .map_err(|e| integrity(format!("bucket {prefix}: {e}")))?;
            if b.header.entries != t.len() || b.header.version != t.len() as u64 {
                return Err(integrity(format!("bucket {prefix}: header counts disagree")));
            }
            t
        };
        if tree.is_empty() {
            continue;
        }
        for (id, e) in by_id {
            let slot = &mut slots[id.0 as usize];
            if slot.is_some() {
                return Err(integrity(format!("entry {id} stored twice")));
            }
            *slot = Some(e);
        }
        reg.buckets[prefix.index()] = tree;
        commitments.push((prefix, rolled_back, b.header.digest));
    }

    let entries: Vec<RegistryEntry> = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| integrity(format!("committed entry {i} is missing"))))
        .collect::<Result<_, _>>()?;
    reg.entry_digests = entries
        .iter()
        .map(|e| entry_digest(&e.canonical_bytes()))
        .collect();
    reg.entries = entries;

    for (rec, entry) in ledger.records().iter().zip(&reg.entries) {
        if rec.prefix != extract_prefix(entry.hash, config.scheme) {
            return Err(integrity(format!(
                "ledger record {} names bucket {} but entry {} lives in another",
                rec.seq, rec.prefix, entry.entry_id
            )));
        }
    }

    let mut leaves = Vec::with_capacity(commitments.len());
    for (prefix, rolled_back, stated) in commitments {
        let tree = &reg.buckets[prefix.index()];
        let digest = reg.digest_bucket(tree, None);
        if !rolled_back && digest != stated {
            return Err(integrity(format!(
                "bucket {prefix} contents do not match its recorded digest"
            )));
        }
        leaves.push(BucketCommitment {
            prefix,
            digest,
            version: tree.len() as u64,
        });
    }
    reg.trie = CommitmentTrie::from_commitments(leaves);
    reg.ledger = ledger;

    if reg.trie.root() != reg.ledger_root() {
        return Err(integrity(
            "recomputed root does not match the latest ledger root",
        ));
    }
    if header.entries == committed && header.root != reg.trie.root() {
        return Err(integrity("header root does not match the ledger"));
    }
    Ok((reg, repairs))
}
