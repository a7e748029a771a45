//! Throughput of the hot loops: trajectory materialization, rotated prefix
//! sums, endpoint sampling, and the decay diagnostic.
//!
//! Run with `cargo bench -p qdftlab-bench`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use qdftlab_core::*;
use std::hint::black_box;

fn bench_simulate_future(c: &mut Criterion) {
    let innov = InnovationDistribution::standard_normal();
    let mut group = c.benchmark_group("simulate_future");
    for (label, family, depth) in [
        ("geometric", CoefficientFamily::geometric(0.5).unwrap(), 64usize),
        ("harmonic", CoefficientFamily::harmonic(), 1024),
    ] {
        let past = sample_past(&family, &innov, depth, 1);
        let n = 2048usize;
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new(label, n), &n, |b, &n| {
            let mut rep = 0u64;
            b.iter(|| {
                rep += 1;
                black_box(simulate_future(&past, &family, &innov, n, rep))
            });
        });
    }
    group.finish();
}

fn bench_rotated_prefix(c: &mut Criterion) {
    let values: Vec<f64> = (0..4096).map(|k| ((k * 2654435761usize) as f64).sin()).collect();
    let mut group = c.benchmark_group("rotated_prefix_sums");
    group.throughput(Throughput::Elements(values.len() as u64));
    group.bench_function("n4096", |b| {
        b.iter(|| black_box(rotated_prefix_sums(black_box(&values), 1.234)))
    });
    group.finish();
}

fn bench_w_endpoint_sampling(c: &mut Criterion) {
    let family = CoefficientFamily::geometric(0.5).unwrap();
    let innov = InnovationDistribution::standard_normal();
    let past = sample_past(&family, &innov, 64, 7);
    let exp = QuenchedExperiment::new(
        family,
        innov,
        past,
        ThetaMode::Fixed(std::f64::consts::FRAC_PI_2),
        4096,
        1.0,
        200,
        vec![0.5, 1.0],
        0.01,
    )
    .unwrap();
    let mut group = c.benchmark_group("w_samples");
    group.throughput(Throughput::Elements(exp.replicates as u64));
    group.bench_function("n4096_r200", |b| {
        b.iter(|| black_box(w_samples(&exp, std::f64::consts::FRAC_PI_2)))
    });
    group.finish();
}

fn bench_decay(c: &mut Criterion) {
    let family = CoefficientFamily::harmonic();
    let innov = InnovationDistribution::standard_normal();
    let past = sample_past(&family, &innov, 256, 3);
    let mut group = c.benchmark_group("decay_diagnostic");
    group.sample_size(10);
    group.bench_function("harmonic_n512_r32", |b| {
        b.iter(|| {
            black_box(
                decay_diagnostic(&past, &family, &innov, 2.0, &[1, 4], &[256, 512], 32).unwrap(),
            )
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_simulate_future,
    bench_rotated_prefix,
    bench_w_endpoint_sampling,
    bench_decay
);
criterion_main!(benches);
