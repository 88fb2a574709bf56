//! Single-thread pool versus the default pool on the hot paths. Build with
//! `--no-default-features` to measure the purely sequential code.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ltkd_core::data::{generate_synthetic, GeneratorConfig};
use ltkd_core::eval::per_class_ap;
use ltkd_core::experiment::{prepare, ExperimentConfig};
use ltkd_core::nnet::{MlpNetwork, Tensor};
use ltkd_core::par;
use ltkd_core::train::TrainConfig;

const POOLS: [(&str, Option<usize>); 2] = [("1-thread", Some(1)), ("default", None)];

fn forward_backward(c: &mut Criterion) {
    let net = MlpNetwork::init(&[64, 256, 256, 40], 7).unwrap();
    let rows = 1024;
    let batch = Tensor::new(
        vec![rows, 64],
        (0..rows * 64)
            .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
            .collect(),
    )
    .unwrap();
    let upstream = Tensor::new(vec![rows, 40], vec![0.01; rows * 40]).unwrap();
    let mut group = c.benchmark_group("forward_backward");
    for (name, threads) in POOLS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::with_threads(threads, || {
                    let trace = net.forward_trace(&batch).unwrap();
                    net.backward_trace(&trace, &upstream).unwrap()
                })
            })
        });
    }
    group.finish();
}

fn average_precision(c: &mut Criterion) {
    let ds = generate_synthetic(&GeneratorConfig::default(), 3).unwrap();
    let net = MlpNetwork::init(&[ds.d_in, 64, 2 * ds.n_classes], 3).unwrap();
    let mut group = c.benchmark_group("per_class_ap");
    for (name, threads) in POOLS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || per_class_ap(&net, &ds).unwrap()))
        });
    }
    group.finish();
}

fn teacher_training(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        train: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let ds = generate_synthetic(&cfg.data, 5).unwrap();
    let mut group = c.benchmark_group("teacher_training");
    group.sample_size(10);
    for (name, threads) in POOLS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::with_threads(threads, || prepare(&ds, "bench", &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    forward_backward,
    average_precision,
    teacher_training
);
criterion_main!(benches);
