//! Parallel vs sequential throughput for the data-parallel kernels:
//! context sampling, walk generation, score accumulation, and the
//! per-node metric loops. Built with default features the "parallel"
//! side runs on the rayon pool; with `--no-default-features` both sides
//! are sequential.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use fairgen_core::assembler::{accumulate_scores, accumulate_scores_seq};
use fairgen_core::embedding::EmbeddingTable;
use fairgen_core::generator::{generate_walks, generate_walks_seq, GenModelConfig, GeneratorModel};
use fairgen_core::metrics::baseline::er_generate;
use fairgen_core::metrics::{
    average_shortest_path_length, average_shortest_path_length_seq, clustering_coefficient,
    clustering_coefficient_seq,
};
use fairgen_core::walk::{sample_context, sample_context_seq, SamplerConfig};
use fairgen_core::SeedStream;

fn bench_sampling(c: &mut Criterion) {
    let g = er_generate(2000, 20_000, &mut SeedStream::new(1, "bench-er").rng(0)).unwrap();
    let cfg = SamplerConfig {
        walks_per_batch: 4000,
        mix_ratio: 1.0,
        ..Default::default()
    };
    let stream = SeedStream::new(2, "bench-sample");
    let mut group = c.benchmark_group("sample_context");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(sample_context(&g, None, &cfg, stream).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(sample_context_seq(&g, None, &cfg, stream).unwrap()))
    });
    group.finish();
}

fn bench_generation(c: &mut Criterion) {
    let n = 500;
    let mut rng = SeedStream::new(3, "bench-emb").rng(0);
    use rand::Rng;
    let table = EmbeddingTable {
        vectors: ndarray::Array2::from_shape_fn((n, 32), |_| rng.random::<f64>() - 0.5),
    };
    let model = GeneratorModel::new(
        &table,
        GenModelConfig {
            dim: 32,
            heads: 4,
            ff_width: 64,
            walk_length: 10,
        },
        SeedStream::new(4, "bench-gen"),
    )
    .unwrap();
    let dist = vec![1.0; n];
    let stream = SeedStream::new(5, "bench-gen-walks");
    let mut group = c.benchmark_group("generate_walks");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(generate_walks(&model, 200, 10, &dist, stream).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(generate_walks_seq(&model, 200, 10, &dist, stream).unwrap()))
    });
    group.finish();
}

fn bench_scores(c: &mut Criterion) {
    let g = er_generate(2000, 20_000, &mut SeedStream::new(6, "bench-er").rng(0)).unwrap();
    let cfg = SamplerConfig {
        walks_per_batch: 20_000,
        mix_ratio: 1.0,
        ..Default::default()
    };
    let walks = sample_context(&g, None, &cfg, SeedStream::new(7, "bench-walks")).unwrap();
    let mut group = c.benchmark_group("accumulate_scores");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(accumulate_scores(g.n(), &walks).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(accumulate_scores_seq(g.n(), &walks).unwrap()))
    });
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let g = er_generate(1500, 30_000, &mut SeedStream::new(8, "bench-er").rng(0)).unwrap();
    let mut group = c.benchmark_group("metrics");
    group.sample_size(10);
    group.bench_function("clustering/parallel", |b| {
        b.iter(|| black_box(clustering_coefficient(&g)))
    });
    group.bench_function("clustering/sequential", |b| {
        b.iter(|| black_box(clustering_coefficient_seq(&g)))
    });
    group.bench_function("aspl/parallel", |b| {
        b.iter(|| black_box(average_shortest_path_length(&g)))
    });
    group.bench_function("aspl/sequential", |b| {
        b.iter(|| black_box(average_shortest_path_length_seq(&g)))
    });
    group.finish();
}

criterion_group!(benches, bench_sampling, bench_generation, bench_scores, bench_metrics);
criterion_main!(benches);
