use std::hint::black_box;

use adagram::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const RANK: usize = 5;
/// Gradients absorbed before timing, so the exact backend has a realistic history.
const WARMUP_STEPS: usize = 100;

fn gradients(dim: usize, count: usize) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
    (0..count)
        .map(|_| DMatrix::from_fn(1, dim, |_, _| rng.sample(StandardNormal)))
        .collect()
}

fn step_cost(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimizer_step");
    for dim in [64, 256, 1024] {
        let grads = gradients(dim, 64);
        for kind in [
            OptimizerKind::AdaGramPS,
            OptimizerKind::AdaGramFR,
            OptimizerKind::AdaGramExact,
            OptimizerKind::AdaGradDiag,
        ] {
            let cfg = OptimizerConfig::new(kind).with_rank(RANK).with_learning_rate(0.01);
            let mut opt = Optimizer::new(cfg, 1, dim).unwrap();
            let mut params = opt.init_params(1, dim);
            for g in grads.iter().cycle().take(WARMUP_STEPS) {
                opt.step(&mut params, g).unwrap();
            }
            let mut i = 0;
            group.bench_with_input(BenchmarkId::new(kind.name(), dim), &dim, |b, _| {
                b.iter_batched(
                    || (opt.clone(), params.clone()),
                    |(mut opt, mut params)| {
                        i = (i + 1) % grads.len();
                        opt.step(&mut params, black_box(&grads[i])).unwrap();
                        params
                    },
                    criterion::BatchSize::SmallInput,
                )
            });
        }
    }
    group.finish();
}

criterion_group!(benches, step_cost);
criterion_main!(benches);
