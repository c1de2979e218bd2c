//! Seeded fixtures shared by the benchmarks.

use image::DynamicImage;
use phashreg::harness::{registry_of, Scene};
use phashreg::{BkTree, EntryId, PerceptualHash, PrefixScheme, Registry, RegistryConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 0xbe9c;

pub fn hashes(n: usize) -> Vec<PerceptualHash> {
    phashreg::harness::synth_corpus(n, SEED)
}

/// Registered hashes with `flips` random bits flipped.
pub fn queries(stored: &[PerceptualHash], n: usize, flips: u32) -> Vec<PerceptualHash> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5a5a);
    (0..n)
        .map(|_| {
            let mut mask = 0u64;
            while mask.count_ones() < flips {
                mask |= 1 << rng.random_range(0..64);
            }
            PerceptualHash(stored[rng.random_range(0..stored.len())].0 ^ mask)
        })
        .collect()
}

pub fn tree(hashes: &[PerceptualHash]) -> BkTree {
    let mut t = BkTree::new();
    for (i, h) in hashes.iter().enumerate() {
        t.insert(*h, EntryId(i as u64));
    }
    t
}

pub fn registry(hashes: &[PerceptualHash], scheme: PrefixScheme, tolerance: u32) -> Registry {
    let cfg = RegistryConfig::new(scheme, tolerance, 6).expect("valid config");
    registry_of(hashes, cfg).expect("in-memory registry")
}

/// A procedural scene rendered at `side` x `side`.
pub fn scene(side: u32) -> DynamicImage {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    DynamicImage::ImageRgb8(Scene::random(&mut rng).render(side, side))
}
