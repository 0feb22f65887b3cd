//! Implicit inverse factor of the gradient second-moment matrix.
//!
//! With `G_t = εI + Σ_{τ≤t} g_τ g_τᵀ` and `L_0 = √ε·I`, every backend keeps
//!
//! ```text
//! L_t⁻¹ = (I − A_t) / √ε,        G_t = L_t L_tᵀ
//! ```
//!
//! Absorbing a new gradient `g` with `ḡ = L_t⁻¹ g` left-multiplies the factor by
//! `(I − β ḡ ḡᵀ)`, i.e. `A_{t+1} = A_t + β ḡ ḡᵀ (I − A_t)`.
//!
//! * [`ExactPQState`] stores `A_t = P Qᵀ` with one new column in each factor per
//!   step. Memory grows linearly with the step count; it serves as the oracle
//!   backend.
//! * [`IntegratorState`] stores a rank-`r` approximation of `A_t` and advances it
//!   with [`projector_splitting_step`] or the incremental truncated SVD, with an
//!   optional memory weight `A_{t+1} = μ A_t + (1 − μ) ΔA`.

use nalgebra::{DMatrixView, DVector};

use crate::lowrank::{
    projector_splitting_step, rank_one_svd_update, truncated_svd_update, LowRankFactors,
    RankOneIncrement,
};
use crate::{Error, Result};

/// Default cap on the number of stored values (`2·n·t`) of the exact backend.
pub const DEFAULT_MEMORY_BUDGET: usize = 10_000_000;

/// `α` with `(1 + α s)² = 1 + s`, in the cancellation-free form `1 / (√(1+s) + 1)`.
pub fn alpha_of(norm_sq: f64) -> Result<f64> {
    if !norm_sq.is_finite() || norm_sq < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "squared norm must be finite and non-negative, got {norm_sq}"
        )));
    }
    Ok(1.0 / ((1.0 + norm_sq).sqrt() + 1.0))
}

/// Sherman–Morrison coefficient `β = α / (1 + α s)`, so that
/// `(I + α ḡḡᵀ)⁻¹ = I − β ḡḡᵀ`.
pub fn beta_of(alpha: f64, norm_sq: f64) -> Result<f64> {
    let beta = alpha / (1.0 + alpha * norm_sq);
    if !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "beta is not finite for alpha = {alpha}, norm_sq = {norm_sq}"
        )));
    }
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub norm_sq: f64,
}

impl ScalarCoefficients {
    pub fn from_norm_sq(norm_sq: f64) -> Result<Self> {
        let alpha = alpha_of(norm_sq)?;
        let beta = beta_of(alpha, norm_sq)?;
        Ok(Self {
            alpha,
            beta,
            norm_sq,
        })
    }

    pub fn for_gradient(gbar: &DVector<f64>) -> Result<Self> {
        Self::from_norm_sq(gbar.norm_squared())
    }
}

/// `L_{t+1}⁻¹ g = ḡ / √(1 + ‖ḡ‖²)` for `ḡ = L_t⁻¹ g`, without touching any state.
pub fn preconditioned_direction(gbar: &DVector<f64>) -> DVector<f64> {
    gbar / (1.0 + gbar.norm_squared()).sqrt()
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Growing factors `P`, `Q` (both `n×t`, column-major) with `A_t = P Qᵀ`.
#[derive(Debug, Clone)]
pub struct ExactPQState {
    dim: usize,
    eps: f64,
    p: Vec<f64>,
    q: Vec<f64>,
    steps: usize,
    budget: usize,
}

impl ExactPQState {
    pub fn new(dim: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            eps,
            p: Vec::new(),
            q: Vec::new(),
            steps: 0,
            budget: DEFAULT_MEMORY_BUDGET,
        })
    }

    pub fn with_memory_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Number of absorbed gradients (columns of `P` and `Q`).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn p(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.p, self.dim, self.steps)
    }

    pub fn q(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.q, self.dim, self.steps)
    }

    /// `ḡ = (I − P Qᵀ) g / √ε`, `O(n·t)`.
    pub fn apply_inverse(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        if g.len() != self.dim {
            return Err(Error::dims("apply_inverse", self.dim, g.len()));
        }
        let y = g / self.eps.sqrt();
        if self.steps == 0 {
            return Ok(y);
        }
        let c = self.q().tr_mul(&y);
        Ok(y - self.p() * c)
    }

    /// Absorbs `ḡ = apply_inverse(g)`: appends `β ḡ` to `P` and `(I − Q Pᵀ) ḡ` to `Q`.
    pub fn update_exact(&mut self, gbar: &DVector<f64>) -> Result<ScalarCoefficients> {
        let coeffs = ScalarCoefficients::for_gradient(gbar)?;
        self.update_with_beta(gbar, coeffs.beta)?;
        Ok(coeffs)
    }

    /// [`update_exact`](Self::update_exact) with a caller-supplied `β`. Exposed
    /// for fault injection in the invariant suite.
    #[doc(hidden)]
    pub fn update_with_beta(&mut self, gbar: &DVector<f64>, beta: f64) -> Result<()> {
        if gbar.len() != self.dim {
            return Err(Error::dims("update_exact", self.dim, gbar.len()));
        }
        let requested = 2 * self.dim * (self.steps + 1);
        if requested > self.budget {
            return Err(Error::MemoryBudget {
                requested,
                budget: self.budget,
            });
        }
        let q_col = if self.steps == 0 {
            gbar.clone()
        } else {
            gbar - self.q() * self.p().tr_mul(gbar)
        };
        self.p.extend(gbar.iter().map(|x| beta * x));
        self.q.extend(q_col.iter());
        self.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorVariant {
    ProjectorSplitting,
    TruncatedSvd,
}

/// Rank-`r` approximation `A_t ≈ U S Vᵀ` of the exact `P Qᵀ`.
#[derive(Debug, Clone)]
pub struct IntegratorState {
    factors: LowRankFactors,
    eps: f64,
    mu: Option<f64>,
    variant: IntegratorVariant,
}

impl IntegratorState {
    /// `mu = None` accumulates increments unweighted (`A + ΔA`).
    pub fn new(
        dim: usize,
        rank: usize,
        eps: f64,
        mu: Option<f64>,
        variant: IntegratorVariant,
    ) -> Result<Self> {
        check_eps(eps)?;
        if let Some(mu) = mu {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::InvalidArgument(format!("mu = {mu} outside [0, 1]")));
            }
        }
        Ok(Self {
            factors: LowRankFactors::zeros(dim, dim, rank)?,
            eps,
            mu,
            variant,
        })
    }

    pub fn factors(&self) -> &LowRankFactors {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mu(&self) -> Option<f64> {
        self.mu
    }

    pub fn variant(&self) -> IntegratorVariant {
        self.variant
    }

    /// `ḡ = y − U (S (Vᵀ y))` with `y = g / √ε`, `O(n·r)`.
    pub fn apply_inverse(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        if g.len() != self.dim() {
            return Err(Error::dims("apply_inverse", self.dim(), g.len()));
        }
        let y = g / self.eps.sqrt();
        let ay = self.factors.apply(&y);
        Ok(y - ay)
    }

    /// Absorbs `ḡ`: builds `ΔA = β ḡ (ḡᵀ − ḡᵀ U S Vᵀ)` in factored form and
    /// advances the factors with the configured variant.
    pub fn update_integrator(&mut self, gbar: &DVector<f64>) -> Result<ScalarCoefficients> {
        if gbar.len() != self.dim() {
            return Err(Error::dims("update_integrator", self.dim(), gbar.len()));
        }
        let coeffs = ScalarCoefficients::for_gradient(gbar)?;
        let row = gbar - self.factors.apply_transpose(gbar);
        let inc = RankOneIncrement::new(gbar.clone(), row, coeffs.beta)?;

        self.factors = match (self.variant, self.mu) {
            (IntegratorVariant::ProjectorSplitting, None) => {
                projector_splitting_step(&self.factors, &inc)?
            }
            (IntegratorVariant::ProjectorSplitting, Some(mu)) => {
                let mut damped = self.factors.clone();
                damped.scale(mu);
                let inc = RankOneIncrement {
                    weight: inc.weight * (1.0 - mu),
                    ..inc
                };
                projector_splitting_step(&damped, &inc)?
            }
            (IntegratorVariant::TruncatedSvd, None) => rank_one_svd_update(&self.factors, &inc)?,
            (IntegratorVariant::TruncatedSvd, Some(mu)) => {
                truncated_svd_update(&self.factors, &inc, mu)?
            }
        };
        Ok(coeffs)
    }
}

/// One of the implicit preconditioner backends.
#[derive(Debug, Clone)]
pub enum PreconditionerState {
    Exact(ExactPQState),
    Integrator(IntegratorState),
}

impl PreconditionerState {
    pub fn dim(&self) -> usize {
        match self {
            Self::Exact(s) => s.dim(),
            Self::Integrator(s) => s.dim(),
        }
    }

    pub fn apply_inverse(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Self::Exact(s) => s.apply_inverse(g),
            Self::Integrator(s) => s.apply_inverse(g),
        }
    }

    /// Absorbs `ḡ = apply_inverse(g)` into the state.
    pub fn absorb(&mut self, gbar: &DVector<f64>) -> Result<ScalarCoefficients> {
        match self {
            Self::Exact(s) => s.update_exact(gbar),
            Self::Integrator(s) => s.update_integrator(gbar),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn e(n: usize, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[k] = 1.0;
        v
    }

    fn materialize(state: &ExactPQState) -> DMatrix<f64> {
        let n = state.dim();
        DMatrix::from_fn(n, n, |i, j| state.apply_inverse(&e(n, j)).unwrap()[i])
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_of(3.0).unwrap(), 1.0 / 3.0);
        assert_eq!(alpha_of(0.0).unwrap(), 0.5);
        assert_eq!(alpha_of(8.0).unwrap(), 0.25);
        assert!(alpha_of(-1.0).is_err());
        assert!(alpha_of(f64::NAN).is_err());
        assert!(alpha_of(f64::INFINITY).is_err());
    }

    #[test]
    fn beta_examples() {
        assert!((beta_of(1.0 / 3.0, 3.0).unwrap() - 1.0 / 6.0).abs() < 1e-16);
        assert_eq!(beta_of(0.5, 0.0).unwrap(), 0.5);
        assert!((beta_of(0.25, 8.0).unwrap() - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn scalar_identities() {
        for s in [0.0, 1e-12, 1.0, 1e6] {
            let c = ScalarCoefficients::from_norm_sq(s).unwrap();
            let lhs = (1.0 + c.alpha * s).powi(2);
            assert!((lhs - (1.0 + s)).abs() <= 1e-12 * (1.0 + s));
            assert!((c.beta - c.alpha / (1.0 + s).sqrt()).abs() <= 1e-12 * c.beta);
            assert!(c.alpha > 0.0 && c.alpha <= 0.5);
            assert!(c.beta > 0.0 && c.beta <= 0.5);
        }
    }

    #[test]
    fn empty_state_scales_by_root_eps() {
        let s = ExactPQState::new(2, 1.0).unwrap();
        let g = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(s.apply_inverse(&g).unwrap(), g);
        let s = ExactPQState::new(2, 4.0).unwrap();
        let g = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(s.apply_inverse(&g).unwrap(), DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn first_gradient_base_case() {
        let n = 3;
        let mut s = ExactPQState::new(n, 1.0).unwrap();
        let gbar = s.apply_inverse(&e(n, 0)).unwrap();
        let c = s.update_exact(&gbar).unwrap();
        assert!((c.alpha - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((c.beta - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((s.p()[(0, 0)] - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(s.q().column(0), e(n, 0));

        let after = s.apply_inverse(&e(n, 0)).unwrap();
        assert!((after - e(n, 0) / 2f64.sqrt()).norm() < 1e-15);

        let m = materialize(&s);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 1.0]));
        assert!((m.transpose() * &m - expected).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_pair_halves_both_directions() {
        let n = 4;
        let mut s = ExactPQState::new(n, 1.0).unwrap();
        for k in 0..2 {
            let gbar = s.apply_inverse(&e(n, k)).unwrap();
            s.update_exact(&gbar).unwrap();
        }
        let m = materialize(&s);
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 1.0, 1.0]));
        assert!((m.transpose() * &m - expected).norm() <= 1e-12);
    }

    #[test]
    fn zero_gradient_is_noop() {
        let n = 3;
        let mut s = ExactPQState::new(n, 2.0).unwrap();
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let gbar = s.apply_inverse(&g).unwrap();
        s.update_exact(&gbar).unwrap();
        let before = materialize(&s);
        let c = s.update_exact(&DVector::zeros(n)).unwrap();
        assert_eq!((c.alpha, c.beta), (0.5, 0.5));
        assert_eq!(s.steps(), 2);
        assert_eq!(materialize(&s), before);

        let mut integ =
            IntegratorState::new(n, 2, 2.0, None, IntegratorVariant::ProjectorSplitting).unwrap();
        integ.update_integrator(&gbar).unwrap();
        let a = integ.factors().to_dense();
        integ.update_integrator(&DVector::zeros(n)).unwrap();
        assert!((integ.factors().to_dense() - a).norm() <= 1e-13);
    }

    #[test]
    fn direction_examples() {
        let d = preconditioned_direction(&e(3, 0));
        assert!((d - e(3, 0) / 2f64.sqrt()).norm() < 1e-16);
        assert_eq!(preconditioned_direction(&DVector::zeros(2)), DVector::zeros(2));
        let d = preconditioned_direction(&DVector::from_vec(vec![3.0, 4.0]));
        let r = 26f64.sqrt();
        assert!((d - DVector::from_vec(vec![3.0 / r, 4.0 / r])).norm() < 1e-16);
    }

    #[test]
    fn integrator_rank_one_matches_exact_outer_product() {
        let n = 5;
        for variant in [IntegratorVariant::ProjectorSplitting, IntegratorVariant::TruncatedSvd] {
            let mut integ = IntegratorState::new(n, 1, 1.0, None, variant).unwrap();
            let gbar = integ.apply_inverse(&e(n, 0)).unwrap();
            integ.update_integrator(&gbar).unwrap();
            let mut expected = DMatrix::zeros(n, n);
            expected[(0, 0)] = 1.0 - 1.0 / 2f64.sqrt();
            assert!((integ.factors().to_dense() - expected).norm() <= 1e-12);
        }
    }

    #[test]
    fn mu_one_freezes_the_state() {
        let n = 6;
        let g = DVector::from_fn(n, |i, _| (i as f64) - 2.5);
        for variant in [IntegratorVariant::ProjectorSplitting, IntegratorVariant::TruncatedSvd] {
            let mut integ = IntegratorState::new(n, 2, 1.0, None, variant).unwrap();
            for k in 0..2 {
                let gbar = integ.apply_inverse(&(&g + e(n, k))).unwrap();
                integ.update_integrator(&gbar).unwrap();
            }
            let mut frozen = integ.clone();
            frozen.mu = Some(1.0);
            let before = frozen.factors().to_dense();
            let gbar = frozen.apply_inverse(&g).unwrap();
            frozen.update_integrator(&gbar).unwrap();
            assert!((frozen.factors().to_dense() - before).norm() <= 1e-12);
        }
    }

    #[test]
    fn dimension_and_budget_errors() {
        let s = ExactPQState::new(3, 1.0).unwrap();
        assert!(s.apply_inverse(&DVector::zeros(2)).is_err());
        let mut s = ExactPQState::new(3, 1.0).unwrap().with_memory_budget(12);
        s.update_exact(&e(3, 0)).unwrap();
        s.update_exact(&e(3, 1)).unwrap();
        assert!(matches!(
            s.update_exact(&e(3, 2)),
            Err(Error::MemoryBudget { requested: 18, budget: 12 })
        ));
        assert!(ExactPQState::new(3, 0.0).is_err());
        assert!(IntegratorState::new(3, 2, 1.0, Some(1.5), IntegratorVariant::TruncatedSvd).is_err());
        assert!(IntegratorState::new(3, 4, 1.0, None, IntegratorVariant::TruncatedSvd).is_err());
    }

    fn sequence() -> impl Strategy<Value = (usize, f64, Vec<Vec<f64>>)> {
        (2usize..9, prop::sample::select(vec![1e-2, 1.0, 10.0])).prop_flat_map(|(n, eps)| {
            let g = prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), 1..12);
            (Just(n), Just(eps), g)
        })
    }

    proptest! {
        #[test]
        fn isometry_against_dense_inverse((n, eps, grads) in sequence(), probe in prop::collection::vec(-1.0f64..1.0, 8)) {
            let mut state = ExactPQState::new(n, eps).unwrap();
            let mut g_dense = DMatrix::<f64>::identity(n, n) * eps;
            let v = DVector::from_fn(n, |i, _| probe[i] + 0.1);
            for g in &grads {
                let g = DVector::from_column_slice(g);
                let gbar = state.apply_inverse(&g).unwrap();
                state.update_exact(&gbar).unwrap();
                g_dense += &g * g.transpose();
                let inv = g_dense.clone().cholesky().unwrap().inverse();
                let expected = v.dot(&(&inv * &v));
                let got = state.apply_inverse(&v).unwrap().norm_squared();
                prop_assert!((got - expected).abs() <= 1e-8 * expected);
            }
        }

        #[test]
        fn direction_never_expands(g in prop::collection::vec(-100.0f64..100.0, 1..10)) {
            let g = DVector::from_vec(g);
            let d = preconditioned_direction(&g);
            if g.norm() == 0.0 {
                prop_assert_eq!(d.norm(), 0.0);
            } else {
                prop_assert!(d.norm() < g.norm());
            }
        }
    }
}
