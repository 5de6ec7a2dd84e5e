//! Batch preparation (views, temperatures, charts, mixing weights) on the
//! calling thread versus fanned out over rayon.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use tsproto::augment::default_bank;
use tsproto::data::{synthetic, Split};
use tsproto::par::Exec;
use tsproto::pipeline::{palette_for, prepare_batch};
use tsproto::rng::seeded;

fn bench_prepare(c: &mut Criterion) {
    let bank = default_bank();
    let palette = palette_for(1);
    let mut group = c.benchmark_group("prepare_batch");
    group.sample_size(20);
    for len in [128, 512] {
        let ds = synthetic::cylinder_bell_funnel(16, len, Split::Train, &mut seeded(1));
        for (name, exec) in [
            ("sequential", Exec::Sequential),
            ("parallel", Exec::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(name, len), &ds.samples, |b, batch| {
                b.iter(|| {
                    prepare_batch(
                        black_box(batch),
                        &bank,
                        0.1,
                        0.1,
                        64,
                        &palette,
                        3407,
                        0,
                        exec,
                    )
                    .unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_prepare);
criterion_main!(benches);
