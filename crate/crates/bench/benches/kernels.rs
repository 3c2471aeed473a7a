use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use grcca::augment::{ppr_diffusion, ppr_exact, ppr_series};
use grcca::cluster::kmeans_fit;
use grcca::{rng, spmm, sym_normalize, DenseMatrix, KMeansParams};
use grcca_bench::bench_graph;

fn spmm_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for n in [1000, 4000] {
        let g = bench_graph(n, 16, 0);
        let a = sym_normalize(&g);
        let x = DenseMatrix::from_fn(n, 256, |i, j| ((i * 31 + j * 7) % 13) as f64 - 6.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| spmm(black_box(&a), black_box(&x))));
    }
    group.finish();
}

fn ppr_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("ppr");
    group.sample_size(10);
    let g = bench_graph(1000, 16, 1);
    let t = sym_normalize(&g);
    group.bench_function("exact_1000", |b| b.iter(|| ppr_exact(black_box(&t), 0.05)));
    group.bench_function("series_1000_tol1e-4", |b| b.iter(|| ppr_series(black_box(&t), 0.05, 1e-4)));
    group.bench_function("sparsified_1000_eps1e-4", |b| b.iter(|| ppr_diffusion(black_box(&g), 0.05, 1e-4).unwrap()));
    group.finish();
}

fn kmeans_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(20);
    let x = DenseMatrix::from_fn(2708, 256, |i, j| ((i % 7) as f64) + (((i * 131 + j * 17) % 101) as f64) / 101.0);
    for restarts in [1, 10] {
        let params = KMeansParams {
            restarts,
            ..KMeansParams::default()
        };
        group.bench_with_input(BenchmarkId::new("n2708_k14_restarts", restarts), &params, |b, p| {
            b.iter(|| kmeans_fit(black_box(&x), 14, &mut rng::stream(0, &[]), p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spmm_bench, ppr_bench, kmeans_bench);
criterion_main!(benches);
