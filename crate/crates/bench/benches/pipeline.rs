//! Stage-level benchmarks: graph construction, precompute, forward pass,
//! and cache IO.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mew_bench::{features_for, graph_for, params_for, random_table};
use mew_core::geometry::delaunay_adjacency;
use mew_core::model::{full_forward, Mode};
use mew_core::precompute::{cache_read, cache_write, normalize_adjacency, spmm};
use std::hint::black_box;

fn bench_delaunay(c: &mut Criterion) {
    let mut group = c.benchmark_group("delaunay");
    for n in [1_000usize, 5_000, 10_000] {
        let table = random_table(n, 5, 4, 1);
        let points = table.positions();
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, pts| {
            b.iter(|| delaunay_adjacency(black_box(pts)).unwrap());
        });
    }
    group.finish();
}

fn bench_spmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for n in [5_000usize, 10_000] {
        let table = random_table(n, 5, 39, 2);
        let graph = graph_for(&table);
        let adj =
            normalize_adjacency(graph.n, &graph.voronoi.pairs().collect::<Vec<_>>()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &(), |b, _| {
            b.iter(|| spmm(black_box(&adj), black_box(&graph.features)).unwrap());
        });
    }
    group.finish();
}

fn bench_precompute(c: &mut Criterion) {
    let mut group = c.benchmark_group("precompute_image");
    group.sample_size(10);
    for n in [2_000usize, 5_000] {
        let table = random_table(n, 8, 39, 3);
        let graph = graph_for(&table);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(), |b, _| {
            b.iter(|| features_for(black_box(&graph), 3, 5));
        });
    }
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_forward");
    for n in [5_000usize, 10_000] {
        let table = random_table(n, 8, 39, 4);
        let graph = graph_for(&table);
        let pf = features_for(&graph, 3, 6);
        let params = params_for(&pf, 16);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(), |b, _| {
            b.iter(|| full_forward(black_box(&pf), black_box(&params), Mode::Eval, None).unwrap());
        });
    }
    group.finish();
}

fn bench_cache_io(c: &mut Criterion) {
    let table = random_table(5_000, 8, 39, 5);
    let graph = graph_for(&table);
    let pf = features_for(&graph, 3, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.mewp");
    let mut group = c.benchmark_group("cache");
    group.sample_size(20);
    group.bench_function("write_5k", |b| {
        b.iter(|| cache_write(black_box(&pf), black_box(&path)).unwrap());
    });
    cache_write(&pf, &path).unwrap();
    group.bench_function("read_5k", |b| {
        b.iter(|| cache_read(black_box(&path)).unwrap());
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_delaunay,
    bench_spmm,
    bench_precompute,
    bench_forward,
    bench_cache_io
);
criterion_main!(benches);
