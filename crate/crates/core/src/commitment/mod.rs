//! Tamper-evidence layer.
//!
//! Each non-empty bucket is committed by a SHA-256 digest of its content set.
//! Bucket digests are the leaves of a 16-ary trie of fixed depth 4 (one level
//! per hex digit of the prefix key) whose root summarizes the whole registry.
//! Every root change is appended to a digest-chained [`Ledger`], the local
//! stand-in for an on-chain anchor.

mod ledger;
mod proof;
mod trie;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::bktree::EntryId;
use crate::hashing::PerceptualHash;
use crate::prefix::PrefixKey;

pub use ledger::{Ledger, LedgerRecord};
pub use proof::{verify_inclusion, InclusionProof};
pub use trie::{BucketCommitment, CommitmentTrie, RootUpdate};

#[derive(Debug, Error)]
pub enum CommitmentError {
    #[error("no committed bucket for prefix {0}")]
    NotFound(PrefixKey),
    #[error("invalid digest hex {0:?}")]
    InvalidDigest(String),
    #[error("malformed proof: {0}")]
    MalformedProof(String),
    #[error("ledger line {line}: {reason}")]
    LedgerFormat { line: usize, reason: String },
    #[error("ledger chain broken at sequence {0}")]
    ChainBroken(u64),
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CommitmentError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| CommitmentError::InvalidDigest(s.into()))?;
        Ok(Digest(out))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl FromStr for Digest {
    type Err = CommitmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn sha256(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

const ENTRY_TAG: &[u8] = b"phashreg/entry/v1";
const BUCKET_TAG: &[u8] = b"phashreg/bucket/v1";
const EMPTY_BUCKET_TAG: &[u8] = b"phashreg/bucket/empty/v1";

/// Digest of an entry's canonical metadata encoding.
pub fn entry_digest(canonical: &[u8]) -> Digest {
    sha256(&[ENTRY_TAG, &(canonical.len() as u64).to_be_bytes(), canonical])
}

/// One stored entry as seen by the bucket digest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LeafRecord {
    pub hash: PerceptualHash,
    pub entry: EntryId,
    pub entry_digest: Digest,
}

/// The fixed digest of a bucket with no entries.
pub fn empty_bucket_digest() -> Digest {
    sha256(&[EMPTY_BUCKET_TAG])
}

/// Digest of a bucket's content set.
///
/// Records are sorted by `(hash, entry id)` first, so the result does not
/// depend on insertion order or on the tree's shape.
pub fn bucket_digest(records: &mut [LeafRecord]) -> Digest {
    if records.is_empty() {
        return empty_bucket_digest();
    }
    records.sort_unstable();
    let mut h = Sha256::new();
    h.update(BUCKET_TAG);
    h.update((records.len() as u64).to_be_bytes());
    for r in records.iter() {
        h.update(r.hash.bits().to_be_bytes());
        h.update(r.entry.0.to_be_bytes());
        h.update(r.entry_digest.0);
    }
    Digest(h.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(h: u64, id: u64) -> LeafRecord {
        LeafRecord {
            hash: PerceptualHash(h),
            entry: EntryId(id),
            entry_digest: entry_digest(format!("meta-{id}").as_bytes()),
        }
    }

    #[test]
    fn empty_bucket_is_constant() {
        assert_eq!(bucket_digest(&mut []), empty_bucket_digest());
        assert_eq!(
            empty_bucket_digest().to_hex(),
            sha256(&[b"phashreg/bucket/empty/v1"]).to_hex()
        );
    }

    #[test]
    fn single_bit_change_changes_digest() {
        let a = bucket_digest(&mut [rec(0xFF00, 0)]);
        let b = bucket_digest(&mut [rec(0xFF01, 0)]);
        assert_ne!(a, b);
    }

    #[test]
    fn digest_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut recs: Vec<LeafRecord> = (0..40).map(|i| rec(rng.random(), i)).collect();
        let a = bucket_digest(&mut recs.clone());
        recs.shuffle(&mut rng);
        assert_eq!(a, bucket_digest(&mut recs));
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = sha256(&[b"x"]);
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
        assert!(Digest::from_hex("abc").is_err());
    }
}
