use super::*;
use chrono::DateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn meta(i: u64) -> EntryMetadata {
    EntryMetadata::new("test-platform")
        .at(DateTime::from_timestamp(1_750_000_000 + i as i64, 0).unwrap())
}

fn reg(cfg: RegistryConfig) -> Registry {
    Registry::new(cfg).unwrap()
}

fn random_registry(n: usize, seed: u64) -> (Registry, Vec<PerceptualHash>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = reg(RegistryConfig::default());
    let hashes: Vec<PerceptualHash> = (0..n).map(|_| PerceptualHash(rng.random())).collect();
    for (i, h) in hashes.iter().enumerate() {
        r.register(*h, meta(i as u64)).unwrap();
    }
    (r, hashes)
}

/// Flip `n` distinct bits chosen outside `protected`.
fn flip_bits(h: PerceptualHash, n: usize, protected: u64, rng: &mut ChaCha8Rng) -> PerceptualHash {
    let mut out = h.0;
    let mut flipped = 0u64;
    while (flipped.count_ones() as usize) < n {
        let bit = 1u64 << rng.random_range(0..64);
        if bit & (protected | flipped) == 0 {
            flipped |= bit;
            out ^= bit;
        }
    }
    PerceptualHash(out)
}

/// Bits of the hash that feed the discontinuous prefix.
const DISCONTINUOUS_MASK: u64 = 0x000F_000F_000F_000F;

#[test]
fn empty_registry_answers_non_match() {
    let r = reg(RegistryConfig::default());
    let v = r.verify(PerceptualHash(0xA1F3_C04B_FF22_1234));
    assert_eq!(v.outcome, Outcome::NonMatch);
    assert_eq!(v.min_distance, None);
    assert!(v.matched.is_none());
    assert_eq!(v.prefix.to_hex(), "3B24");
    assert_eq!(r.root(), CommitmentTrie::new().root());
}

#[test]
fn register_then_exact_match() {
    let mut r = reg(RegistryConfig::default());
    let h = PerceptualHash(0xA1F3_C04B_FF22_1234);
    let e = r.register(h, meta(0)).unwrap();
    assert_eq!(e.entry_id, EntryId(0));
    let v = r.verify(h);
    assert_eq!(v.outcome, Outcome::ExactMatch);
    assert_eq!(v.min_distance, Some(0));
    assert_eq!(v.similarity.unwrap().to_string(), "100.00");
    assert_eq!(v.matched.unwrap(), e);
    assert_eq!(v.buckets_searched, 1);
}

#[test]
fn duplicate_hash_keeps_both_entries() {
    let mut r = reg(RegistryConfig::default());
    let h = PerceptualHash(42);
    let a = r.register(h, meta(0)).unwrap();
    let b = r.register(h, meta(1)).unwrap();
    assert_ne!(a.entry_id, b.entry_id);
    assert_eq!(r.len(), 2);
    assert_eq!(r.bucket(r.prefix_of(h)).len(), 2);
    assert_eq!(r.bucket(r.prefix_of(h)).node_count(), 1);
    // the earliest registration is the reported match
    assert_eq!(r.verify(h).matched.unwrap().entry_id, a.entry_id);
}

#[test]
fn two_bit_edit_is_a_potential_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut r = reg(RegistryConfig::default());
    let h = PerceptualHash(0xA1F3_C04B_FF22_1234);
    r.register(h, meta(0)).unwrap();
    let q = flip_bits(h, 2, DISCONTINUOUS_MASK, &mut rng);
    let v = r.verify(q);
    assert_eq!(v.outcome, Outcome::PotentialMatch);
    assert_eq!(v.min_distance, Some(2));
    assert_eq!(v.similarity.unwrap().to_string(), "96.88");
}

#[test]
fn distant_hash_is_non_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut r = reg(RegistryConfig::default());
    let h = PerceptualHash(0x0123_4567_89AB_CDEF);
    r.register(h, meta(0)).unwrap();
    let q = flip_bits(h, 30, DISCONTINUOUS_MASK, &mut rng);
    let v = r.verify(q);
    assert_eq!(v.outcome, Outcome::NonMatch);
    assert_eq!(v.min_distance, Some(30));
    assert!(v.similarity.is_none());
}

#[test]
fn prefix_flips_beyond_tolerance_are_out_of_scope() {
    let mut r = reg(RegistryConfig::default());
    let h = PerceptualHash(0);
    r.register(h, meta(0)).unwrap();
    // two prefix bits: still in scope
    let near = PerceptualHash(0b11);
    assert_eq!(r.verify(near).outcome, Outcome::PotentialMatch);
    // three prefix bits: scope excludes the bucket even though d = 3 <= tau
    let far = PerceptualHash(0b111);
    let v = r.verify(far);
    assert_eq!(v.outcome, Outcome::NonMatch);
    assert_eq!(v.min_distance, None);
    // widening the tolerance brings it back
    let v = r.verify_with(far, 3, 6).unwrap();
    assert_eq!(v.outcome, Outcome::PotentialMatch);
    assert_eq!(v.min_distance, Some(3));
}

#[test]
fn tau_boundary_is_inclusive() {
    let mut r = reg(RegistryConfig::default());
    r.register(PerceptualHash(0), meta(0)).unwrap();
    let q = PerceptualHash(0b11_1111 << 8); // six bits outside the prefix
    assert_eq!(r.verify_with(q, 2, 6).unwrap().outcome, Outcome::PotentialMatch);
    assert_eq!(r.verify_with(q, 2, 5).unwrap().outcome, Outcome::NonMatch);
}

#[test]
fn invalid_parameters_are_rejected() {
    let r = reg(RegistryConfig::default());
    assert!(matches!(
        r.verify_with(PerceptualHash(0), 5, 6),
        Err(RegistryError::Prefix(_))
    ));
    assert!(matches!(
        r.verify_with(PerceptualHash(0), 2, 65),
        Err(RegistryError::InvalidInput(_))
    ));
    assert!(RegistryConfig::new(PrefixScheme::Continuous, 9, 6).is_err());
}

#[test]
fn invalid_metadata_is_rejected_without_side_effects() {
    let mut r = reg(RegistryConfig::default());
    let root = r.root();
    for bad in ["", "has space", &"x".repeat(65)] {
        let err = r.register(PerceptualHash(1), EntryMetadata::new(bad)).unwrap_err();
        assert!(matches!(err, RegistryError::InvalidInput(_)));
    }
    assert_eq!(r.len(), 0);
    assert_eq!(r.root(), root);
    assert!(r.ledger().is_empty());
}

#[test]
fn verdicts_match_a_scoped_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let hashes: Vec<PerceptualHash> = (0..3000).map(|_| PerceptualHash(rng.random())).collect();
    for scheme in PrefixScheme::ALL {
        let mut r2 = reg(RegistryConfig::new(scheme, 2, 6).unwrap());
        for (i, h) in hashes.iter().enumerate() {
            r2.register(*h, meta(i as u64)).unwrap();
        }
        for _ in 0..300 {
            let base = hashes[rng.random_range(0..hashes.len())];
            let q = flip_bits(base, rng.random_range(0..12), 0, &mut rng);
            for t in 0..=MAX_FLIP_TOLERANCE {
                let v = r2.verify_with(q, t, 6).unwrap();
                let home = extract_prefix(q, scheme);
                // oracle: scan every entry whose prefix is within t bits
                let best = hashes
                    .iter()
                    .enumerate()
                    .filter(|(_, h)| extract_prefix(**h, scheme).distance(home) <= t)
                    .map(|(i, h)| (h.distance(q), i as u64))
                    .min();
                assert_eq!(v.min_distance, best.map(|b| b.0), "scheme {scheme:?} t {t}");
                if v.outcome != Outcome::NonMatch {
                    assert_eq!(v.matched.as_ref().unwrap().entry_id.0, best.unwrap().1);
                }
                if v.min_distance != Some(0) {
                    assert_eq!(v.buckets_searched, neighbor_count_for(t));
                }
                assert!(v.buckets_searched <= neighbor_count_for(t));
            }
        }
    }
}

fn neighbor_count_for(t: u32) -> usize {
    crate::prefix::neighbor_count(t)
}

#[test]
fn lower_tau_never_adds_matches() {
    let (r, hashes) = random_registry(2000, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let q = flip_bits(hashes[rng.random_range(0..hashes.len())], 8, 0, &mut rng);
        let mut prev_match = true;
        for tau in (0..=20).rev() {
            let m = r.verify_with(q, 2, tau).unwrap().outcome.is_match();
            assert!(prev_match || !m, "tau {tau} matched after a stricter miss");
            prev_match = m;
        }
    }
}

#[test]
fn verify_does_not_mutate() {
    let (r, hashes) = random_registry(500, 31);
    let root = r.root();
    let ledger_len = r.ledger().len();
    for h in hashes.iter().take(50) {
        r.verify(PerceptualHash(!h.0));
        r.verify(*h);
    }
    assert_eq!(r.root(), root);
    assert_eq!(r.ledger().len(), ledger_len);
    assert_eq!(r.len(), 500);
}

#[test]
fn commitments_track_every_registration() {
    let (r, _) = random_registry(1500, 41);
    assert_eq!(r.ledger().len(), 1500);
    for (i, rec) in r.ledger().records().iter().enumerate() {
        assert_eq!(rec.seq, i as u64);
        assert_eq!(rec.prefix, r.prefix_of(r.entries()[i].hash));
        assert_eq!(rec.timestamp, r.entries()[i].created_at);
    }
    assert_eq!(r.ledger_root(), r.root());
    r.check_integrity().unwrap();
    for c in r.trie().commitments() {
        assert_eq!(c.version, r.bucket(c.prefix).len() as u64);
        let proof = r.prove(c.prefix).unwrap();
        assert!(verify_inclusion(&proof, &r.root()));
    }
}

#[test]
fn root_is_independent_of_unrelated_insertion_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let hashes: Vec<PerceptualHash> = (0..200).map(|_| PerceptualHash(rng.random())).collect();
    let build = |order: &[usize]| {
        // ids stay tied to hashes; only the arrival order changes
        let mut t = CommitmentTrie::new();
        let mut by_bucket: BTreeMap<PrefixKey, Vec<LeafRecord>> = BTreeMap::new();
        for &i in order {
            let h = hashes[i];
            by_bucket
                .entry(extract_prefix(h, PrefixScheme::Discontinuous))
                .or_default()
                .push(LeafRecord {
                    hash: h,
                    entry: EntryId(i as u64),
                    entry_digest: entry_digest(format!("{i}").as_bytes()),
                });
        }
        for (p, mut recs) in by_bucket {
            t.update(p, bucket_digest(&mut recs));
        }
        t.root()
    };
    let fwd: Vec<usize> = (0..200).collect();
    let rev: Vec<usize> = (0..200).rev().collect();
    assert_eq!(build(&fwd), build(&rev));
}

#[test]
fn tampering_is_detected() {
    let (mut r, hashes) = random_registry(300, 61);
    r.check_integrity().unwrap();
    r.tamper_stored_hash(EntryId(17), PerceptualHash(hashes[17].0 ^ (1 << 40)));
    assert!(matches!(r.check_integrity(), Err(RegistryError::Integrity(_))));
}

#[test]
fn stats_report_occupancy() {
    let mut r = reg(RegistryConfig::default());
    assert_eq!(r.stats().mean_occupancy, 0.0);
    // three in one bucket, one elsewhere
    for (i, h) in [0u64, 1 << 40, 1 << 54, 0xF].into_iter().enumerate() {
        r.register(PerceptualHash(h), meta(i as u64)).unwrap();
    }
    let s = r.stats();
    assert_eq!(s.total_entries, 4);
    assert_eq!(s.nonempty_buckets, 2);
    assert_eq!(s.max_occupancy, 3);
    assert_eq!(s.occupancy_histogram, BTreeMap::from([(1, 1), (3, 1)]));
    assert!((s.mean_occupancy - 4.0 / 65536.0).abs() < 1e-15);
}

#[test]
fn snapshot_round_trip_preserves_everything() {
    let (r, hashes) = random_registry(2000, 71);
    let dir = tempfile::tempdir().unwrap();
    r.snapshot(dir.path()).unwrap();
    let back = Registry::restore(dir.path()).unwrap();
    assert_eq!(back.root(), r.root());
    assert_eq!(back.entries(), r.entries());
    assert_eq!(back.config(), r.config());
    assert_eq!(back.ledger().records(), r.ledger().records());
    back.check_integrity().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for _ in 0..200 {
        let q = flip_bits(hashes[rng.random_range(0..hashes.len())], rng.random_range(0..9), 0, &mut rng);
        assert_eq!(back.verify(q), r.verify(q));
    }
    for h in &hashes {
        let p = r.prefix_of(*h);
        assert_eq!(back.bucket(p).preorder(), r.bucket(p).preorder());
    }
}

#[test]
fn restore_rejects_modified_bucket_files() {
    let (r, _) = random_registry(400, 81);
    let dir = tempfile::tempdir().unwrap();
    r.snapshot(dir.path()).unwrap();
    let victim = r.trie().commitments().next().unwrap().prefix;
    let path = dir.path().join(BUCKET_DIR).join(format!("{victim}.jsonl"));
    let text = std::fs::read_to_string(&path).unwrap();
    let edited = text.replacen("test-platform", "evil-platform", 1);
    assert_ne!(edited, text);
    std::fs::write(&path, edited).unwrap();
    assert!(matches!(
        Registry::restore(dir.path()),
        Err(RegistryError::Integrity(_))
    ));
}

#[test]
fn persistent_registry_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Registry::create(dir.path(), RegistryConfig::default()).unwrap();
    assert!(matches!(
        Registry::create(dir.path(), RegistryConfig::default()),
        Err(RegistryError::AlreadyExists(_))
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for i in 0..100 {
        r.register(PerceptualHash(rng.random()), meta(i)).unwrap();
    }
    let root = r.root();
    drop(r);
    let mut r = Registry::open(dir.path()).unwrap();
    assert_eq!(r.root(), root);
    assert_eq!(r.len(), 100);
    r.register(PerceptualHash(5), meta(100)).unwrap();
    let again = Registry::open(dir.path()).unwrap();
    assert_eq!(again.root(), r.root());
    again.check_integrity().unwrap();
}

#[test]
fn uncommitted_bucket_write_is_rolled_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Registry::create(dir.path(), RegistryConfig::default()).unwrap();
    let h = PerceptualHash(0xAAAA_0000_5555_0000);
    r.register(h, meta(0)).unwrap();
    let committed_root = r.root();
    r.register(PerceptualHash(h.0 ^ 0x100), meta(1)).unwrap();
    // simulate a crash after the bucket write but before the ledger append
    let ledger = dir.path().join(LEDGER_FILE);
    let text = std::fs::read_to_string(&ledger).unwrap();
    let first_line_end = text.find('\n').unwrap() + 1;
    std::fs::write(&ledger, &text[..first_line_end]).unwrap();
    let header = dir.path().join(HEADER_FILE);
    let mut hdr: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&header).unwrap()).unwrap();
    hdr["entries"] = 1.into();
    hdr["root"] = committed_root.to_hex().into();
    std::fs::write(&header, hdr.to_string()).unwrap();

    let back = Registry::open(dir.path()).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back.root(), committed_root);
    back.check_integrity().unwrap();
    // the repaired files load cleanly again
    assert_eq!(Registry::restore(dir.path()).unwrap().root(), committed_root);
}

#[test]
fn torn_ledger_tail_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Registry::create(dir.path(), RegistryConfig::default()).unwrap();
    r.register(PerceptualHash(1), meta(0)).unwrap();
    let root = r.root();
    drop(r);
    let ledger = dir.path().join(LEDGER_FILE);
    let mut text = std::fs::read_to_string(&ledger).unwrap();
    text.push_str("1 2026-01-01T00:00:00Z 00");
    std::fs::write(&ledger, text).unwrap();
    assert_eq!(Registry::restore(dir.path()).unwrap().root(), root);
}

#[test]
fn missing_snapshot_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        Registry::restore(dir.path().join("nope")),
        Err(RegistryError::NotFound(_))
    ));
}
