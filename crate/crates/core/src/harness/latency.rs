//! Query latency of three index structures over the same synthetic hashes.
//!
//! Runs single-threaded. Every query is timed on its own with a monotonic
//! clock after one untimed warm-up pass, so p95 is an order statistic of the
//! per-query samples.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{synth_corpus, HarnessError};
use crate::bktree::{BkTree, EntryId, SearchStats};
use crate::hashing::{PerceptualHash, HASH_BITS};
use crate::prefix::{extract_prefix, PrefixScheme};
use crate::registry::RegistryConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// Linear scan over a contiguous array.
    FlatArray,
    /// One BK-tree over everything, unbounded best-match search.
    BkTreeOnly,
    /// The registry search path: prefix buckets of BK-trees.
    TrieBkTree,
}

impl Structure {
    pub const ALL: [Structure; 3] = [
        Structure::FlatArray,
        Structure::BkTreeOnly,
        Structure::TrieBkTree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::FlatArray => "flat-array",
            Structure::BkTreeOnly => "bk-tree",
            Structure::TrieBkTree => "trie-bk-tree",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Structure::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| HarnessError::Config(format!("unknown structure {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    pub sizes: Vec<usize>,
    pub queries: usize,
    pub seed: u64,
    pub structures: Vec<Structure>,
    /// Bits flipped in each sampled query; 0 queries registered hashes as-is.
    pub query_flips: u32,
    pub scheme: PrefixScheme,
    pub flip_tolerance: u32,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            sizes: vec![100_000, 500_000, 1_000_000],
            queries: 50,
            seed: 0x1a7e_c0de,
            structures: Structure::ALL.to_vec(),
            query_flips: 0,
            scheme: PrefixScheme::Discontinuous,
            flip_tolerance: 2,
        }
    }
}

/// Timing for one structure at one registry size. Times are milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub structure: Structure,
    pub registry_size: usize,
    pub query_count: usize,
    pub avg_ms: f64,
    pub p95_ms: f64,
    /// Hashes compared per query: array length, BK-tree nodes visited, or
    /// entries in the searched buckets.
    pub mean_candidates: f64,
}

/// How the three structures' answers compare at one size.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equivalence {
    pub registry_size: usize,
    pub queries: usize,
    /// Queries whose true nearest entry lies outside the trie's bucket scope.
    pub out_of_scope: usize,
    /// Of those, queries where the trie reported a larger distance (or none).
    pub out_of_scope_misses: usize,
    /// Disagreements that should never happen: in-scope trie answers or any
    /// BK-tree answer differing from the linear scan.
    pub mismatches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRun {
    pub config: LatencyConfig,
    pub reports: Vec<LatencyReport>,
    pub equivalence: Vec<Equivalence>,
}

/// Nearest distance in a flat scan; returns (distance, first index).
pub fn flat_nearest(hashes: &[u64], q: u64) -> (u32, usize) {
    let mut best = (u32::MAX, 0);
    for (i, h) in hashes.iter().enumerate() {
        let d = (h ^ q).count_ones();
        if d < best.0 {
            best = (d, i);
        }
    }
    best
}

/// Average and p95 (the `ceil(0.95 n)`-th smallest sample) of `samples`.
pub fn summarize(samples: &mut [f64]) -> (f64, f64) {
    assert!(!samples.is_empty());
    samples.sort_by(f64::total_cmp);
    let avg = samples.iter().sum::<f64>() / samples.len() as f64;
    let rank = (0.95 * samples.len() as f64).ceil() as usize;
    (avg, samples[rank.max(1) - 1])
}

fn time_queries<T>(queries: &[PerceptualHash], mut run: impl FnMut(PerceptualHash) -> T) -> Vec<f64> {
    for q in queries {
        black_box(run(*q));
    }
    queries
        .iter()
        .map(|q| {
            let start = Instant::now();
            black_box(run(black_box(*q)));
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect()
}

fn sample_queries(hashes: &[PerceptualHash], cfg: &LatencyConfig, size: usize) -> Vec<PerceptualHash> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ size as u64);
    (0..cfg.queries)
        .map(|_| {
            let mut q = hashes[rng.random_range(0..hashes.len())].0;
            let mut flipped = 0u64;
            while flipped.count_ones() < cfg.query_flips {
                flipped |= 1 << rng.random_range(0..64);
            }
            q ^= flipped;
            PerceptualHash(q)
        })
        .collect()
}

pub fn run_latency_bench(cfg: &LatencyConfig) -> Result<LatencyRun, HarnessError> {
    if cfg.queries == 0 || cfg.sizes.contains(&0) {
        return Err(HarnessError::Config("sizes and query count must be positive".into()));
    }
    if cfg.query_flips > HASH_BITS {
        return Err(HarnessError::Config("query flips exceed the hash width".into()));
    }
    let reg_cfg = RegistryConfig::new(cfg.scheme, cfg.flip_tolerance, RegistryConfig::default().tau)?;

    let mut reports = Vec::new();
    let mut equivalence = Vec::new();
    for &size in &cfg.sizes {
        let hashes = synth_corpus(size, cfg.seed);
        let queries = sample_queries(&hashes, cfg, size);
        let flat: Vec<u64> = hashes.iter().map(|h| h.0).collect();

        let bk = cfg.structures.contains(&Structure::BkTreeOnly).then(|| {
            let mut t = BkTree::new();
            for (i, h) in hashes.iter().enumerate() {
                t.insert(*h, EntryId(i as u64));
            }
            t
        });
        let reg = if cfg.structures.contains(&Structure::TrieBkTree) {
            Some(super::registry_of(&hashes, reg_cfg)?)
        } else {
            None
        };

        for &structure in &cfg.structures {
            let (mut samples, candidates) = match structure {
                Structure::FlatArray => (
                    time_queries(&queries, |q| flat_nearest(&flat, q.0)),
                    size as f64,
                ),
                Structure::BkTreeOnly => {
                    let t = bk.as_ref().expect("built above");
                    let samples = time_queries(&queries, |q| {
                        t.nearest_within(q, HASH_BITS, &mut SearchStats::default())
                    });
                    let visited: usize = queries
                        .iter()
                        .map(|q| {
                            let mut st = SearchStats::default();
                            t.nearest_within(*q, HASH_BITS, &mut st);
                            st.nodes_visited
                        })
                        .sum();
                    (samples, visited as f64 / queries.len() as f64)
                }
                Structure::TrieBkTree => {
                    let r = reg.as_ref().expect("built above");
                    let samples = time_queries(&queries, |q| r.verify(q));
                    let cands: usize = queries.iter().map(|q| r.verify(*q).candidates_checked).sum();
                    (samples, cands as f64 / queries.len() as f64)
                }
            };
            let (avg_ms, p95_ms) = summarize(&mut samples);
            reports.push(LatencyReport {
                structure,
                registry_size: size,
                query_count: queries.len(),
                avg_ms,
                p95_ms,
                mean_candidates: candidates,
            });
        }

        let mut eq = Equivalence {
            registry_size: size,
            queries: queries.len(),
            ..Equivalence::default()
        };
        for q in &queries {
            let (truth, _) = flat_nearest(&flat, q.0);
            if let Some(t) = &bk {
                let got = t.nearest_within(*q, HASH_BITS, &mut SearchStats::default());
                if got.map(|h| h.distance) != Some(truth) {
                    eq.mismatches += 1;
                }
            }
            let Some(r) = &reg else { continue };
            let home = extract_prefix(*q, cfg.scheme);
            let in_scope = flat.iter().any(|&h| {
                (h ^ q.0).count_ones() == truth
                    && extract_prefix(PerceptualHash(h), cfg.scheme).distance(home)
                        <= cfg.flip_tolerance
            });
            let got = r.verify(*q).min_distance;
            if in_scope {
                if got != Some(truth) {
                    eq.mismatches += 1;
                }
            } else {
                eq.out_of_scope += 1;
                if got != Some(truth) {
                    eq.out_of_scope_misses += 1;
                }
            }
        }
        equivalence.push(eq);
    }
    Ok(LatencyRun {
        config: cfg.clone(),
        reports,
        equivalence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p95_is_the_48th_of_50() {
        let mut s: Vec<f64> = (1..=50).rev().map(f64::from).collect();
        let (avg, p95) = summarize(&mut s);
        assert_eq!(avg, 25.5);
        assert_eq!(p95, 48.0);
        assert_eq!(summarize(&mut [3.0]), (3.0, 3.0));
    }

    #[test]
    fn flat_nearest_finds_first_minimum() {
        let hs = [0b1111, 0b0111, 0b0011, 0b0011];
        assert_eq!(flat_nearest(&hs, 0), (2, 2));
    }

    #[test]
    fn small_run_is_consistent() {
        let cfg = LatencyConfig {
            sizes: vec![2000, 5000],
            queries: 20,
            query_flips: 3,
            ..LatencyConfig::default()
        };
        let run = run_latency_bench(&cfg).unwrap();
        assert_eq!(run.reports.len(), 6);
        for r in &run.reports {
            assert_eq!(r.query_count, 20);
            assert!(r.avg_ms >= 0.0 && r.p95_ms >= 0.0);
        }
        for e in &run.equivalence {
            assert_eq!(e.mismatches, 0);
            assert!(e.out_of_scope_misses <= e.out_of_scope);
        }
    }

    #[test]
    fn registered_queries_are_always_in_scope() {
        let cfg = LatencyConfig {
            sizes: vec![3000],
            queries: 30,
            ..LatencyConfig::default()
        };
        let run = run_latency_bench(&cfg).unwrap();
        assert_eq!(run.equivalence[0].out_of_scope, 0);
        assert_eq!(run.equivalence[0].mismatches, 0);
    }

    #[test]
    fn rejects_empty_runs() {
        let cfg = LatencyConfig {
            queries: 0,
            ..LatencyConfig::default()
        };
        assert!(run_latency_bench(&cfg).is_err());
    }

    #[test]
    fn structure_names_round_trip() {
        for s in Structure::ALL {
            assert_eq!(s.as_str().parse::<Structure>().unwrap(), s);
        }
    }
}
