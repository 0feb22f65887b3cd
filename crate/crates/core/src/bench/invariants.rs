//! Self-check suite behind `adagram verify`.
//!
//! Every check compares library results with dense reference computations on
//! small seeded problems.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::glm::{batch_hessian, gradient, loss, Batch, GlmModel, Link};
use crate::optim::{DiagAdaGradState, FullAdaGradState, ParamState, ShampooState};
use crate::par::{self, Execution};
use crate::precond::{
    preconditioned_direction, ExactPQState, IntegratorState, IntegratorVariant, ScalarCoefficients,
};
use crate::Result;

const ISOMETRY_TOL: f64 = 1e-8;
const DIRECTION_TOL: f64 = 1e-10;
const EXACTNESS_TOL: f64 = 1e-8;
const GRADIENT_TOL: f64 = 1e-6;
const HESSIAN_TOL: f64 = 1e-5;
const BASELINE_TOL: f64 = 1e-12;
const SEQUENCES: usize = 24;

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Multiplies every `β` fed to the exact backend. Anything but `1` is a
    /// deliberately broken update used to confirm that the suite can fail.
    pub beta_scale: f64,
    pub exec: Execution,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            beta_scale: 1.0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error.
    pub error: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<22} max error {:.3e} (tolerance {:.0e})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.error,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

fn check(name: &'static str, error: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name,
        passed: error <= tolerance,
        error,
        tolerance,
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Returns (isometry relative error, direction error) over one sequence.
fn exact_sequence(seed: u64, index: usize, beta_scale: f64) -> Result<(f64, f64)> {
    let mut rng = rng_for(seed, index as u64);
    let n = rng.random_range(2..=16);
    let steps = rng.random_range(1..=32);
    let eps = [1e-2, 1.0, 10.0][index % 3];

    let mut state = ExactPQState::new(n, eps)?;
    let mut gram = DMatrix::<f64>::identity(n, n) * eps;
    let (mut iso, mut dir) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        let g = gaussian(&mut rng, n);
        let gbar = state.apply_inverse(&g)?;
        let coeffs = ScalarCoefficients::for_gradient(&gbar)?;
        state.update_with_beta(&gbar, coeffs.beta * beta_scale)?;
        gram.ger(1.0, &g, &g, 1.0);

        let after = state.apply_inverse(&g)?;
        dir = dir.max((preconditioned_direction(&gbar) - after).amax());

        let v = gaussian(&mut rng, n);
        let lhs = state.apply_inverse(&v)?.norm_squared();
        let chol = gram.clone().cholesky().expect("εI + Σ g gᵀ is positive definite");
        let rhs = v.dot(&chol.solve(&v));
        iso = iso.max((lhs - rhs).abs() / rhs);
    }
    Ok((iso, dir))
}

/// Largest `‖A_int − P Qᵀ‖_F` for both integrator variants with `r ≥ T`.
fn exactness_sequence(seed: u64, index: usize) -> Result<f64> {
    let mut rng = rng_for(seed, 1000 + index as u64);
    let n = rng.random_range(8..=16);
    let steps = rng.random_range(1..=8);
    let eps = 0.5;
    let mut exact = ExactPQState::new(n, eps)?;
    let mut ps = IntegratorState::new(n, steps, eps, None, IntegratorVariant::ProjectorSplitting)?;
    let mut svd = IntegratorState::new(n, steps, eps, None, IntegratorVariant::TruncatedSvd)?;
    for _ in 0..steps {
        let g = gaussian(&mut rng, n);
        let gbar = exact.apply_inverse(&g)?;
        exact.update_exact(&gbar)?;
        ps.update_integrator(&ps.apply_inverse(&g)?)?;
        svd.update_integrator(&svd.apply_inverse(&g)?)?;
    }
    let pq = exact.p() * exact.q().transpose();
    Ok((ps.factors().to_dense() - &pq)
        .norm()
        .max((svd.factors().to_dense() - &pq).norm()))
}

/// Largest gradient and Hessian deviations from central differences.
fn finite_difference(seed: u64, link: Link) -> Result<(f64, f64)> {
    let mut rng = rng_for(seed, 2000 + link as u64);
    let (k, n, b) = (if link == Link::Sigmoid { 2 } else { 3 }, 5, 12);
    let m = if link == Link::Sigmoid { 1 } else { k };
    let x: Vec<f64> = (0..b * n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    let batch = Batch::new(&x, &y, n)?;
    let theta = DMatrix::from_fn(m, n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let model = GlmModel::from_theta(theta.clone(), link);

    let h = 1e-5;
    let shifted = |i: usize, j: usize, d: f64| {
        let mut t = theta.clone();
        t[(i, j)] += d;
        GlmModel::from_theta(t, link)
    };
    let analytic = gradient(&model, &batch)?;
    let mut grad_err = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let fd = (loss(&shifted(i, j, h), &batch)? - loss(&shifted(i, j, -h), &batch)?) / (2.0 * h);
            grad_err = grad_err.max((fd - analytic[(i, j)]).abs());
        }
    }

    let mut hess_err = 0.0f64;
    if link == Link::Sigmoid {
        let hess = batch_hessian(&model, &batch)?;
        for j in 0..n {
            let fd = (gradient(&shifted(0, j, h), &batch)? - gradient(&shifted(0, j, -h), &batch)?) / (2.0 * h);
            for i in 0..n {
                hess_err = hess_err.max((fd[(0, i)] - hess[(i, j)]).abs());
            }
        }
    }
    Ok((grad_err, hess_err))
}

/// Shampoo on `1×1` against full AdaGrad, and diagonal against full AdaGrad on
/// single-coordinate gradients.
fn baselines(seed: u64) -> Result<f64> {
    let mut rng = rng_for(seed, 3000);
    let (lr, eps) = (0.3, 0.1);

    let mut shampoo = ShampooState::new(1, 1, eps);
    let mut full = FullAdaGradState::new(1, eps)?;
    let (mut a, mut b) = (ParamState::zeros(1, 1), ParamState::zeros(1, 1));
    let mut err = 0.0f64;
    for _ in 0..20 {
        let g = DMatrix::from_element(1, 1, rng.sample::<f64, _>(StandardNormal));
        shampoo.step(&mut a, &g, lr)?;
        full.step(&mut b, &g, lr)?;
        err = err.max((a.weights() - b.weights()).amax());
    }

    let n = 6;
    let mut diag = DiagAdaGradState::new(n, eps);
    let mut full = FullAdaGradState::new(n, eps)?;
    let (mut a, mut b) = (ParamState::zeros(n, 1), ParamState::zeros(n, 1));
    for _ in 0..30 {
        let mut g = DMatrix::zeros(n, 1);
        g[rng.random_range(0..n)] = rng.sample(StandardNormal);
        diag.step(&mut a, &g, lr)?;
        full.step(&mut b, &g, lr)?;
        err = err.max((a.weights() - b.weights()).amax());
    }
    Ok(err)
}

/// Runs every check at fixed seeds.
pub fn run_invariant_suite(opts: SuiteOptions) -> Result<InvariantReport> {
    let exact = par::map_range(opts.exec, SEQUENCES, |i| exact_sequence(opts.seed, i, opts.beta_scale))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let iso = exact.iter().map(|e| e.0).fold(0.0, f64::max);
    let dir = exact.iter().map(|e| e.1).fold(0.0, f64::max);

    let exactness = par::map_range(opts.exec, SEQUENCES, |i| exactness_sequence(opts.seed, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let (g_sig, h_sig) = finite_difference(opts.seed, Link::Sigmoid)?;
    let (g_soft, _) = finite_difference(opts.seed, Link::Softmax)?;

    Ok(InvariantReport {
        checks: vec![
            check("isometry", iso, ISOMETRY_TOL),
            check("direction", dir, DIRECTION_TOL),
            check("integrator-exactness", exactness, EXACTNESS_TOL),
            check("gradient", g_sig.max(g_soft), GRADIENT_TOL),
            check("hessian", h_sig, HESSIAN_TOL),
            check("baseline-equivalence", baselines(opts.seed)?, BASELINE_TOL),
        ],
    })
}
