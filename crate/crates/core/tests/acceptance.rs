//! End-to-end acceptance checks, one printed PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute one
//! after another on a quiet machine; the latency criterion would be skewed by
//! tests running in parallel threads.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use phashreg::bktree::{BkTree, EntryId};
use phashreg::commitment::{verify_inclusion, InclusionProof};
use phashreg::harness::{
    build_corpus, registry_of, run_latency_bench, run_sweep, synth_corpus, CorpusConfig,
    LatencyConfig, LatencyReport, LatencyRun, Structure, SweepConfig, SweepResult,
};
use phashreg::prefix::{enumerate_neighbors, extract_prefix, PrefixKey, PrefixScheme};
use phashreg::{similarity_score, PerceptualHash, Registry, RegistryConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn flip_random_bits(h: PerceptualHash, n: u32, rng: &mut ChaCha8Rng) -> PerceptualHash {
    let mut mask = 0u64;
    while mask.count_ones() < n {
        mask |= 1 << rng.random_range(0..64);
    }
    PerceptualHash(h.0 ^ mask)
}

fn similarity_goldens() -> Outcome {
    let got: Vec<String> = [2, 5, 0, 64]
        .iter()
        .map(|&d| similarity_score(d).unwrap().to_string())
        .collect();
    let want = ["96.88", "92.19", "100.00", "0.00"];
    outcome(got == want, format!("scores for d = 2, 5, 0, 64: {}", got.join(" ")))
}

fn neighbor_counts() -> Outcome {
    let key = PrefixKey(0x3B24);
    let counts: Vec<usize> = (1..=4)
        .map(|t| enumerate_neighbors(key, t).unwrap().len())
        .collect();
    // exhaustive scan of the 16-bit key space
    let scan = |t: u32| (0..=u16::MAX).filter(|k| (k ^ key.0).count_ones() <= t).count();
    let oracle: Vec<usize> = (1..=4).map(scan).collect();
    let pass = counts[0] == 17 && counts[1] == 137 && counts[3] == 2517 && counts == oracle;
    outcome(pass, format!("tolerance 1..4 -> {counts:?}, scan oracle {oracle:?}"))
}

fn bktree_oracle() -> Outcome {
    let mut discrepancies = 0;
    let mut results = 0usize;
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let hashes: Vec<PerceptualHash> = (0..10_000).map(|_| PerceptualHash(rng.random())).collect();
        let mut tree = BkTree::new();
        for (i, h) in hashes.iter().enumerate() {
            tree.insert(*h, EntryId(i as u64));
        }
        for qi in 0..100 {
            let q = if qi % 4 == 0 {
                PerceptualHash(rng.random())
            } else {
                let base = hashes[rng.random_range(0..hashes.len())];
                let flips = rng.random_range(0..=8);
                flip_random_bits(base, flips, &mut rng)
            };
            for r in 0..=12 {
                let mut got: Vec<(u32, u64)> = tree
                    .search_radius(q, r)
                    .iter()
                    .map(|h| (h.distance, h.entry.0))
                    .collect();
                got.sort_unstable();
                let want: Vec<(u32, u64)> = {
                    let mut v: Vec<(u32, u64)> = hashes
                        .iter()
                        .enumerate()
                        .map(|(i, h)| (h.distance(q), i as u64))
                        .filter(|&(d, _)| d <= r)
                        .collect();
                    v.sort_unstable();
                    v
                };
                results += want.len();
                if got != want {
                    discrepancies += 1;
                }
            }
        }
    }
    outcome(
        discrepancies == 0,
        format!("20 trees x 100 queries x radii 0..12: {discrepancies} discrepancies over {results} expected hits"),
    )
}

fn search_scope() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hashes: Vec<PerceptualHash> = (0..10_000).map(|_| PerceptualHash(rng.random())).collect();
    let queries: Vec<PerceptualHash> = (0..1000)
        .map(|i| {
            if i % 5 == 0 {
                PerceptualHash(rng.random())
            } else {
                let base = hashes[rng.random_range(0..hashes.len())];
                let flips = rng.random_range(0..=10);
                flip_random_bits(base, flips, &mut rng)
            }
        })
        .collect();
    let mut discrepancies = 0;
    let mut checked = 0;
    for scheme in PrefixScheme::ALL {
        let reg = registry_of(&hashes, RegistryConfig::new(scheme, 2, 6).unwrap()).unwrap();
        let mut by_bucket: BTreeMap<PrefixKey, Vec<PerceptualHash>> = BTreeMap::new();
        for h in &hashes {
            by_bucket.entry(extract_prefix(*h, scheme)).or_default().push(*h);
        }
        for tol in [2, 4] {
            for q in &queries {
                let scope = enumerate_neighbors(extract_prefix(*q, scheme), tol).unwrap();
                let brute = scope
                    .iter()
                    .filter_map(|k| by_bucket.get(k))
                    .flatten()
                    .map(|h| h.distance(*q))
                    .min();
                let got = reg.verify_with(*q, tol, 6).unwrap().min_distance;
                checked += 1;
                if got != brute {
                    discrepancies += 1;
                }
            }
        }
    }
    outcome(
        discrepancies == 0,
        format!("{checked} verifications (2 schemes x tolerances 2, 4): {discrepancies} discrepancies"),
    )
}

fn occupancy_and_candidates(reg: &Registry) -> Outcome {
    let stats = reg.stats();
    // a seed distinct from the corpus seed, so queries are unregistered
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let n = 1000;
    let total: usize = (0..n)
        .map(|_| reg.verify(PerceptualHash(rng.random())).candidates_checked)
        .sum();
    let mean_candidates = total as f64 / n as f64;
    let occ_ok = (stats.mean_occupancy / 15.26 - 1.0).abs() <= 0.05;
    let cand_ok = (mean_candidates / 2055.0 - 1.0).abs() <= 0.10;
    outcome(
        occ_ok && cand_ok,
        format!(
            "{} entries: mean occupancy {:.2} (target 15.26 +/- 5%), mean candidates at tolerance 2 {:.1} (target 2055 +/- 10%)",
            stats.total_entries, stats.mean_occupancy, mean_candidates
        ),
    )
}

fn latency_ordering() -> (Outcome, Vec<LatencyReport>) {
    // registered hashes as queries, then the same with two bits flipped so
    // the trie has to walk all neighbor buckets
    let exact = run_latency_bench(&LatencyConfig {
        sizes: vec![100_000, 1_000_000],
        ..LatencyConfig::default()
    })
    .unwrap();
    let perturbed = run_latency_bench(&LatencyConfig {
        sizes: vec![1_000_000],
        query_flips: 2,
        ..LatencyConfig::default()
    })
    .unwrap();
    let avg = |run: &LatencyRun, s: Structure, n: usize| {
        run.reports
            .iter()
            .find(|r| r.structure == s && r.registry_size == n)
            .unwrap()
            .avg_ms
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, run) in [("exact", &exact), ("2-bit", &perturbed)] {
        let flat = avg(run, Structure::FlatArray, 1_000_000);
        let bk = avg(run, Structure::BkTreeOnly, 1_000_000);
        let trie = avg(run, Structure::TrieBkTree, 1_000_000);
        let mismatches: usize = run.equivalence.iter().map(|e| e.mismatches).sum();
        pass &= trie < flat && trie < bk && trie <= flat / 10.0 && mismatches == 0;
        parts.push(format!(
            "{label} queries avg ms flat {flat:.4}, bk-tree {bk:.4}, trie {trie:.4} ({:.0}x, {mismatches} mismatches)",
            flat / trie
        ));
    }
    let growth = avg(&exact, Structure::FlatArray, 1_000_000) / avg(&exact, Structure::FlatArray, 100_000);
    let mut rows = exact.reports;
    rows.extend(perturbed.reports);
    (
        outcome(
            pass,
            format!(
                "1M hashes, 50 queries: {}; flat 100K->1M growth {growth:.1}x",
                parts.join("; ")
            ),
        ),
        rows,
    )
}

fn tamper_trials() -> Outcome {
    let hashes = synth_corpus(10_000, 7);
    let reg = registry_of(&hashes, RegistryConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    reg.snapshot(dir.path()).unwrap();
    let clean_ok = Registry::restore(dir.path()).is_ok();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut detected = 0;
    let trials = 50;
    for _ in 0..trials {
        let victim = hashes[rng.random_range(0..hashes.len())];
        let prefix = reg.prefix_of(victim);
        let path = dir.path().join("buckets").join(format!("{prefix}.jsonl"));
        let original = fs::read_to_string(&path).unwrap();
        let bit = rng.random_range(0..64);
        let flipped = PerceptualHash(victim.0 ^ (1 << bit));
        // rewrite every occurrence of the stored hash, node and entries
        // alike, so the file stays self-consistent
        let tampered = original.replace(
            &format!("\"{}\"", victim.to_hex()),
            &format!("\"{}\"", flipped.to_hex()),
        );
        assert_ne!(tampered, original);
        fs::write(&path, &tampered).unwrap();
        if Registry::restore(dir.path()).is_err() {
            detected += 1;
        }
        fs::write(&path, &original).unwrap();
    }
    outcome(
        clean_ok && detected == trials,
        format!("10^4-entry snapshot, single-bit hash flips: {detected}/{trials} detected on restore"),
    )
}

fn sweep_shape() -> (Outcome, Vec<SweepResult>) {
    let cfg = CorpusConfig::default();
    let corpus = build_corpus(&cfg).unwrap();
    let sets = corpus.hashes();
    let rows = run_sweep(&sets, &SweepConfig::default()).unwrap();
    let mut failures = Vec::new();
    for cell in rows.chunks(5) {
        let at = |tau: u32| cell.iter().find(|r| r.tau == tau).unwrap();
        let monotone = cell
            .windows(2)
            .all(|w| w[1].recall >= w[0].recall && w[1].fpr >= w[0].fpr);
        let shape = at(6).recall > at(2).recall && at(20).fpr > at(6).fpr;
        if !(monotone && shape) {
            failures.push(format!("{}/{}", cell[0].scheme.as_str(), cell[0].flip_tolerance));
        }
    }
    let sizes_ok = sets.originals.len() >= 100 && sets.edited.len() >= 300 && sets.negatives.len() >= 100;
    (
        outcome(
            failures.is_empty() && sizes_ok,
            format!(
                "{} originals, {} edited, {} negatives; 4 scheme/tolerance cells monotone with recall(6) > recall(2) and FPR(20) > FPR(6); failing cells: {:?}",
                sets.originals.len(),
                sets.edited.len(),
                sets.negatives.len(),
                failures
            ),
        ),
        rows,
    )
}

fn persistence_round_trip() -> Outcome {
    let hashes = synth_corpus(10_000, 9);
    let reg = registry_of(&hashes, RegistryConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    reg.snapshot(dir.path()).unwrap();
    let back = Registry::restore(dir.path()).unwrap();
    let same_root = back.root().as_bytes() == reg.root().as_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut differing = 0;
    for i in 0..100 {
        let q = if i % 2 == 0 {
            PerceptualHash(rng.random())
        } else {
            let base = hashes[rng.random_range(0..hashes.len())];
            let flips = rng.random_range(0..=6);
            flip_random_bits(base, flips, &mut rng)
        };
        if back.verify(q) != reg.verify(q) {
            differing += 1;
        }
    }
    outcome(
        same_root && differing == 0,
        format!("10^4 entries: root preserved {same_root}, {differing}/100 verdicts differ"),
    )
}

fn proof_round_trips() -> Outcome {
    let hashes = synth_corpus(20_000, 11);
    let reg = registry_of(&hashes, RegistryConfig::default()).unwrap();
    let root = reg.root();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let prefixes: Vec<PrefixKey> = reg.trie().commitments().map(|c| c.prefix).collect();
    let mut ok = 0;
    let mut proofs = Vec::new();
    for _ in 0..1000 {
        let p = prefixes[rng.random_range(0..prefixes.len())];
        let proof = reg.prove(p).unwrap();
        if verify_inclusion(&proof, &root) {
            ok += 1;
        }
        proofs.push(proof);
    }
    let mut rejected = 0;
    for _ in 0..100 {
        let proof = &proofs[rng.random_range(0..proofs.len())];
        let mut bytes = proof.to_bytes();
        let i = rng.random_range(0..bytes.len());
        bytes[i] ^= rng.random_range(1..=255u8);
        let accepted = InclusionProof::from_bytes(&bytes).is_ok_and(|p| verify_inclusion(&p, &root));
        if !accepted {
            rejected += 1;
        }
    }
    outcome(
        ok == 1000 && rejected == 100,
        format!("{ok}/1000 proofs verify; {rejected}/100 single-byte corruptions rejected"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "[{}] criterion {n:>2} {name}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o, secs));
    };

    run(1, "similarity score", &mut similarity_goldens);
    run(2, "neighbor enumeration", &mut neighbor_counts);
    run(3, "bk-tree vs linear scan", &mut bktree_oracle);
    run(4, "search scope", &mut search_scope);
    run(5, "occupancy and candidates", &mut || {
        let reg = registry_of(&synth_corpus(1_000_000, 5), RegistryConfig::default()).unwrap();
        occupancy_and_candidates(&reg)
    });
    let mut latency_rows = Vec::new();
    run(6, "latency ordering", &mut || {
        let (o, rows) = latency_ordering();
        latency_rows = rows;
        o
    });
    run(7, "tamper evidence", &mut tamper_trials);
    let mut sweep_rows = Vec::new();
    run(8, "sweep shape", &mut || {
        let (o, rows) = sweep_shape();
        sweep_rows = rows;
        o
    });
    run(9, "persistence round trip", &mut persistence_round_trip);
    run(10, "inclusion proofs", &mut proof_round_trips);

    if let Ok(dir) = std::env::var("PHASHREG_ACCEPTANCE_OUT") {
        let dir = Path::new(&dir);
        fs::create_dir_all(dir).unwrap();
        let meta = [("source", "acceptance suite".to_string())];
        phashreg::harness::write_sweep_csv(fs::File::create(dir.join("sweep.csv")).unwrap(), &meta, &sweep_rows).unwrap();
        phashreg::harness::write_latency_csv(fs::File::create(dir.join("latency.csv")).unwrap(), &meta, &latency_rows).unwrap();
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
