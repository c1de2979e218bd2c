//! Provenance registry for perceptual image hashes.
//!
//! Images are fingerprinted with a 64-bit DCT perceptual hash
//! ([`hashing`]), bucketed by a 16-bit prefix ([`prefix`]) into per-bucket
//! BK-trees ([`bktree`]), and every bucket state is committed into a
//! fixed-depth Merkle trie whose root is appended to a digest-chained ledger
//! ([`commitment`]). [`registry`] ties these together and implements the
//! verification decision; [`harness`] reproduces the accuracy sweep and the
//! latency comparison against flat and single-tree baselines.

pub mod bktree;
pub mod commitment;
pub mod harness;
pub mod hashing;
pub mod prefix;
pub mod registry;

pub use bktree::{BkTree, EntryId, Hit};
pub use commitment::{verify_inclusion, Digest, InclusionProof, LedgerRecord};
pub use hashing::{
    compute_phash, hamming_distance, phash_bytes, phash_file, similarity_score, GrayImage,
    HashError, PerceptualHash, SimilarityScore,
};
pub use prefix::{enumerate_neighbors, extract_prefix, PrefixKey, PrefixScheme};
pub use registry::{
    EntryMetadata, Outcome, Registry, RegistryConfig, RegistryEntry, RegistryError,
    RegistryStats, Verdict,
};
