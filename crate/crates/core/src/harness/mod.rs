//! Evaluation harness: the image-edit pipeline, procedural corpora, the
//! threshold sweep, and the latency comparison.

mod corpus;
mod latency;
mod report;
mod sweep;
mod transform;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hashing::PerceptualHash;
use crate::registry::RegistryError;

pub use corpus::{build_corpus, Corpus, CorpusConfig, EditedImage, QuerySets, Scene};
pub use latency::{
    flat_nearest, run_latency_bench, summarize, Equivalence, LatencyConfig, LatencyReport,
    LatencyRun, Structure,
};
pub use report::{latency_table, sweep_table, write_latency_csv, write_sweep_csv};
pub use sweep::{registry_of, run_sweep, SweepConfig, SweepResult, DEFAULT_TAUS};
pub use transform::{apply_all, apply_transform, TransformKind, TransformSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `count` uniform random hashes, reproducible from `seed`.
pub fn synth_corpus(count: usize, seed: u64) -> Vec<PerceptualHash> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PerceptualHash(rng.random())).collect()
}
