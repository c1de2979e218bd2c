use serde::{Deserialize, Serialize};

use super::trie::{empty_root, leaf_hash, node_hash, DEPTH};
use super::{CommitmentError, Digest};
use crate::prefix::PrefixKey;

/// Inclusion proof for one bucket commitment.
///
/// `siblings[l]` holds the 15 digests next to the path at trie level `l`
/// (0 = children of the root), in nibble order with the path's own slot
/// omitted. Absent children appear as the all-zero digest.
///
/// JSON form:
///
/// ```json
/// { "prefix": "A1F3", "path": [10, 1, 15, 3],
///   "siblings": [["00..", ...15], ...4],
///   "leaf": "<bucket digest hex>", "root": "<root hex>" }
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionProof {
    pub prefix: PrefixKey,
    pub siblings: Vec<Vec<Digest>>,
    pub bucket_digest: Digest,
    pub root: Digest,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProofJson {
    prefix: PrefixKey,
    path: Vec<u8>,
    siblings: Vec<Vec<Digest>>,
    leaf: Digest,
    root: Digest,
}

impl Serialize for InclusionProof {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ProofJson {
            prefix: self.prefix,
            path: self.prefix.nibbles().to_vec(),
            siblings: self.siblings.clone(),
            leaf: self.bucket_digest,
            root: self.root,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for InclusionProof {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let j = ProofJson::deserialize(deserializer)?;
        if j.path != j.prefix.nibbles() {
            return Err(serde::de::Error::custom("path does not match prefix"));
        }
        Ok(InclusionProof {
            prefix: j.prefix,
            siblings: j.siblings,
            bucket_digest: j.leaf,
            root: j.root,
        })
    }
}

/// Length of the binary encoding.
pub const PROOF_BYTES: usize = 2 + 32 + DEPTH * 15 * 32 + 32;

impl InclusionProof {
    /// Recompute the root implied by the leaf and siblings; `None` if the
    /// proof is structurally malformed.
    pub fn recompute_root(&self) -> Option<Digest> {
        if self.siblings.len() != DEPTH || self.siblings.iter().any(|s| s.len() != 15) {
            return None;
        }
        let nibbles = self.prefix.nibbles();
        let mut acc = leaf_hash(self.prefix, &self.bucket_digest);
        for level in (0..DEPTH).rev() {
            let own = nibbles[level] as usize;
            let mut children = [Digest::ZERO; 16];
            let mut sib = self.siblings[level].iter();
            for (i, slot) in children.iter_mut().enumerate() {
                *slot = if i == own { acc } else { *sib.next()? };
            }
            acc = node_hash(level as u8, &children);
        }
        // a non-empty trie never has the empty-trie root
        (acc != empty_root()).then_some(acc)
    }

    /// Fixed-length binary encoding: prefix, leaf, siblings, root.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PROOF_BYTES);
        out.extend_from_slice(&self.prefix.0.to_be_bytes());
        out.extend_from_slice(&self.bucket_digest.0);
        for level in &self.siblings {
            for d in level {
                out.extend_from_slice(&d.0);
            }
        }
        out.extend_from_slice(&self.root.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CommitmentError> {
        if bytes.len() != PROOF_BYTES {
            return Err(CommitmentError::MalformedProof(format!(
                "expected {PROOF_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let digest_at = |off: usize| {
            let mut d = [0u8; 32];
            d.copy_from_slice(&bytes[off..off + 32]);
            Digest(d)
        };
        let prefix = PrefixKey(u16::from_be_bytes([bytes[0], bytes[1]]));
        let bucket_digest = digest_at(2);
        let mut off = 34;
        let mut siblings = Vec::with_capacity(DEPTH);
        for _ in 0..DEPTH {
            let level = (0..15)
                .map(|_| {
                    let d = digest_at(off);
                    off += 32;
                    d
                })
                .collect();
            siblings.push(level);
        }
        let root = digest_at(off);
        Ok(InclusionProof {
            prefix,
            siblings,
            bucket_digest,
            root,
        })
    }
}

/// True iff the proof is well formed, names `root` as its claimed root and
/// recomputes exactly that root.
pub fn verify_inclusion(proof: &InclusionProof, root: &Digest) -> bool {
    proof.root == *root && proof.recompute_root().as_ref() == Some(root)
}
