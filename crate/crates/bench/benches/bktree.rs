use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use phashreg_bench::{hashes, queries, tree};

fn bench_bktree(c: &mut Criterion) {
    let stored = hashes(100_000);
    let t = tree(&stored);
    let qs = queries(&stored, 64, 2);

    let mut g = c.benchmark_group("bktree");
    g.bench_function("insert-10k", |b| b.iter(|| tree(black_box(&stored[..10_000]))));
    for radius in [2u32, 6, 10] {
        g.bench_with_input(BenchmarkId::new("radius-100k", radius), &radius, |b, &r| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % qs.len();
                t.search_radius(black_box(qs[i]), r)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bench_bktree);
criterion_main!(benches);
