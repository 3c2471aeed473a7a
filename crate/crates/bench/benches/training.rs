use criterion::{criterion_group, criterion_main, Criterion};

use grcca::pipeline::{sampler_for, train_with};
use grcca::TrainConfig;
use grcca_bench::bench_graph;

/// One training epoch (plus memory-bank initialization) on a graph of
/// Cora's size, with the diffusion matrix computed once outside the loop.
fn epoch_bench(c: &mut Criterion) {
    let g = bench_graph(2708, 1433, 2);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let sampler = sampler_for(&g, &cfg).unwrap();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_cora_sized", |b| b.iter(|| train_with(&sampler, &cfg, |_| {}).unwrap()));
    group.finish();
}

criterion_group!(benches, epoch_bench);
criterion_main!(benches);
