use std::hint::black_box;

use adagram::bench::{grid_search, DatasetSource, ExperimentConfig, GridSpace};
use adagram::data::{generate_synthetic, CorrelationKind, CorrelationSpec, SyntheticSpec};
use adagram::glm::{loss_with, GlmModel};
use adagram::optim::OptimizerKind;
use adagram::par::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn dense(n: usize, samples: usize) -> SyntheticSpec {
    SyntheticSpec::new(CorrelationSpec::new(CorrelationKind::Dense { rho: 0.95 }, n), samples, 3)
}

fn grid(c: &mut Criterion) {
    let mut base = ExperimentConfig {
        dataset: DatasetSource::Synthetic(dense(20, 1000)),
        epochs: 5,
        ..Default::default()
    };
    base.optimizer.kind = OptimizerKind::AdaGramPS;
    let space = GridSpace {
        learning_rates: vec![0.01, 0.1],
        eps: vec![1e-4, 1.0],
        ranks: vec![2, 5],
        ..Default::default()
    };
    let mut group = c.benchmark_group("grid_search");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| grid_search(&space, &base, exec).unwrap()));
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_batch_loss");
    for samples in [2_000, 20_000] {
        let ds = generate_synthetic(&dense(20, samples)).unwrap();
        let batch = ds.batch().unwrap();
        let model = GlmModel::from_theta(DMatrix::from_element(1, 20, 0.1), adagram::glm::Link::Sigmoid);
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, samples), &samples, |b, _| {
                b.iter(|| loss_with(black_box(&model), &batch, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, grid, metrics);
criterion_main!(benches);
