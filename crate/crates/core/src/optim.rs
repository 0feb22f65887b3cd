//! Optimizers over an `m×n` weight matrix.
//!
//! Gradients are flattened column-major (`vec(W)` stacks the columns of `W`),
//! which is also nalgebra's storage order, so `vec`/`unvec` are plain copies.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::precond::{
    preconditioned_direction, ExactPQState, IntegratorState, IntegratorVariant,
    PreconditionerState,
};
use crate::{Error, Result};

/// Largest `m·n` for which full-matrix AdaGrad keeps a dense `mn×mn` accumulator.
pub const FULL_MATRIX_CAP: usize = 512;

/// Floor applied to eigenvalues before taking inverse fractional powers.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptimizerKind {
    Sgd,
    AdaGradDiag,
    AdaGradFull,
    Shampoo,
    AdaGramExact,
    AdaGramPS,
    AdaGramFR,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::Sgd,
        OptimizerKind::AdaGradDiag,
        OptimizerKind::AdaGradFull,
        OptimizerKind::Shampoo,
        OptimizerKind::AdaGramExact,
        OptimizerKind::AdaGramPS,
        OptimizerKind::AdaGramFR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::AdaGradDiag => "adagrad-diag",
            OptimizerKind::AdaGradFull => "adagrad-full",
            OptimizerKind::Shampoo => "shampoo",
            OptimizerKind::AdaGramExact => "adagram-exact",
            OptimizerKind::AdaGramPS => "adagram-ps",
            OptimizerKind::AdaGramFR => "adagram-fr",
        }
    }

    pub fn is_adagram(self) -> bool {
        matches!(
            self,
            OptimizerKind::AdaGramExact | OptimizerKind::AdaGramPS | OptimizerKind::AdaGramFR
        )
    }

    /// Whether `rank` and `mu` affect this optimizer.
    pub fn uses_low_rank(self) -> bool {
        matches!(self, OptimizerKind::AdaGramPS | OptimizerKind::AdaGramFR)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = OptimizerKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown optimizer '{s}' (expected one of {names:?})"))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub eps: f64,
    /// Rank budget of the low-rank AdaGram variants; clamped to `m·n`.
    pub rank: usize,
    /// Memory weight. `None` accumulates the preconditioner unweighted.
    pub mu: Option<f64>,
    /// Seeds the weight initialization when `init_std > 0`.
    pub seed: u64,
    /// Standard deviation of the Gaussian weight initialization; `0` gives `W = 0`.
    pub init_std: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            learning_rate: 0.1,
            eps: 1.0,
            rank: 2,
            mu: None,
            seed: 0,
            init_std: 0.0,
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    pub fn with_mu(mut self, mu: Option<f64>) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed so a run can serve as a frozen baseline.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if let Some(mu) = self.mu {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::Config(format!("mu must lie in [0, 1], got {mu}")));
            }
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config(format!("init_std must be >= 0, got {}", self.init_std)));
        }
        Ok(())
    }
}

/// Model weights plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    weights: DMatrix<f64>,
    step: u64,
}

impl ParamState {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self::from_matrix(DMatrix::zeros(m, n))
    }

    pub fn from_matrix(weights: DMatrix<f64>) -> Self {
        Self { weights, step: 0 }
    }

    pub fn gaussian(m: usize, n: usize, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DMatrix::from_fn(m, n, |_, _| std * rng.sample::<f64, _>(StandardNormal));
        Self::from_matrix(w)
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `vec(W)`, column-major.
    pub fn to_vec(&self) -> DVector<f64> {
        vec_of(&self.weights)
    }

    /// `W ← W − scale · unvec(d)`.
    fn descend(&mut self, scale: f64, d: &DVector<f64>) {
        self.weights
            .as_mut_slice()
            .iter_mut()
            .zip(d.iter())
            .for_each(|(w, d)| *w -= scale * d);
        self.step += 1;
    }
}

/// Column-major flattening of a matrix.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, nrows: usize, ncols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(nrows, ncols, v.as_slice())
}

fn check_grad(params: &ParamState, grad: &DMatrix<f64>) -> Result<()> {
    if grad.shape() != params.weights.shape() {
        return Err(Error::dims("gradient entries", params.len(), grad.len()));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            step: params.step + 1,
        });
    }
    Ok(())
}

/// `M^{-p}` for symmetric positive semi-definite `M`, eigenvalues floored.
pub fn sym_inverse_power(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let scales = eig.eigenvalues.map(|l| l.max(EIGEN_FLOOR).powf(-p));
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&scales);
    scaled * eig.eigenvectors.transpose()
}

/// `w ← w − η g`.
pub fn sgd_step(params: &mut ParamState, grad: &DMatrix<f64>, lr: f64) -> Result<()> {
    check_grad(params, grad)?;
    params.descend(lr, &vec_of(grad));
    Ok(())
}

/// One AdaGram step: `ḡ = L⁻¹ g` from the pre-update state, absorb `ḡ`, then
/// move along `ḡ / √(1 + ‖ḡ‖²)`.
pub fn adagram_step(
    params: &mut ParamState,
    grad: &DMatrix<f64>,
    precond: &mut PreconditionerState,
    lr: f64,
) -> Result<()> {
    check_grad(params, grad)?;
    let g = vec_of(grad);
    let gbar = precond.apply_inverse(&g)?;
    precond.absorb(&gbar)?;
    params.descend(lr, &preconditioned_direction(&gbar));
    Ok(())
}

/// Diagonal AdaGrad; the accumulator starts at `ε`.
#[derive(Debug, Clone)]
pub struct DiagAdaGradState {
    acc: DVector<f64>,
}

impl DiagAdaGradState {
    pub fn new(dim: usize, eps: f64) -> Self {
        Self {
            acc: DVector::from_element(dim, eps),
        }
    }

    pub fn accumulator(&self) -> &DVector<f64> {
        &self.acc
    }

    pub fn step(&mut self, params: &mut ParamState, grad: &DMatrix<f64>, lr: f64) -> Result<()> {
        check_grad(params, grad)?;
        let g = vec_of(grad);
        self.acc
            .iter_mut()
            .zip(g.iter())
            .for_each(|(s, g)| *s += g * g);
        let d = g.zip_map(&self.acc, |g, s| g / s.sqrt());
        params.descend(lr, &d);
        Ok(())
    }
}

/// Full-matrix AdaGrad with a dense `mn×mn` accumulator (desk scale only).
#[derive(Debug, Clone)]
pub struct FullAdaGradState {
    gram: DMatrix<f64>,
}

impl FullAdaGradState {
    pub fn new(dim: usize, eps: f64) -> Result<Self> {
        if dim > FULL_MATRIX_CAP {
            return Err(Error::Config(format!(
                "full-matrix AdaGrad is limited to {FULL_MATRIX_CAP} parameters, got {dim}"
            )));
        }
        Ok(Self {
            gram: DMatrix::identity(dim, dim) * eps,
        })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `G ← G + g gᵀ`, then `w ← w − η G^{-1/2} g`.
    pub fn step(&mut self, params: &mut ParamState, grad: &DMatrix<f64>, lr: f64) -> Result<()> {
        check_grad(params, grad)?;
        let g = vec_of(grad);
        self.gram.ger(1.0, &g, &g, 1.0);
        let d = sym_inverse_power(&self.gram, 0.5) * g;
        params.descend(lr, &d);
        Ok(())
    }
}

/// Shampoo with left (`m×m`) and right (`n×n`) accumulators starting at `εI`.
#[derive(Debug, Clone)]
pub struct ShampooState {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl ShampooState {
    pub fn new(m: usize, n: usize, eps: f64) -> Self {
        Self {
            left: DMatrix::identity(m, m) * eps,
            right: DMatrix::identity(n, n) * eps,
        }
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// `L ← L + G Gᵀ`, `R ← R + Gᵀ G`, `W ← W − η L^{-1/4} G R^{-1/4}`.
    pub fn step(&mut self, params: &mut ParamState, grad: &DMatrix<f64>, lr: f64) -> Result<()> {
        check_grad(params, grad)?;
        self.left += grad * grad.transpose();
        self.right += grad.transpose() * grad;
        let delta = sym_inverse_power(&self.left, 0.25) * grad * sym_inverse_power(&self.right, 0.25);
        params.descend(lr, &vec_of(&delta));
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum State {
    Sgd,
    AdaGradDiag(DiagAdaGradState),
    AdaGradFull(FullAdaGradState),
    Shampoo(ShampooState),
    AdaGram(PreconditionerState),
}

/// Any configured optimizer behind one `step` call.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    state: State,
}

impl Optimizer {
    /// Builds the optimizer state for an `m×n` weight matrix.
    pub fn new(config: OptimizerConfig, m: usize, n: usize) -> Result<Self> {
        config.validate()?;
        let dim = m * n;
        let eps = config.eps;
        let state = match config.kind {
            OptimizerKind::Sgd => State::Sgd,
            OptimizerKind::AdaGradDiag => State::AdaGradDiag(DiagAdaGradState::new(dim, eps)),
            OptimizerKind::AdaGradFull => State::AdaGradFull(FullAdaGradState::new(dim, eps)?),
            OptimizerKind::Shampoo => State::Shampoo(ShampooState::new(m, n, eps)),
            OptimizerKind::AdaGramExact => {
                State::AdaGram(PreconditionerState::Exact(ExactPQState::new(dim, eps)?))
            }
            OptimizerKind::AdaGramPS | OptimizerKind::AdaGramFR => {
                let variant = if config.kind == OptimizerKind::AdaGramPS {
                    IntegratorVariant::ProjectorSplitting
                } else {
                    IntegratorVariant::TruncatedSvd
                };
                let rank = config.rank.min(dim);
                State::AdaGram(PreconditionerState::Integrator(IntegratorState::new(
                    dim, rank, eps, config.mu, variant,
                )?))
            }
        };
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Initial weights for this configuration.
    pub fn init_params(&self, m: usize, n: usize) -> ParamState {
        if self.config.init_std > 0.0 {
            ParamState::gaussian(m, n, self.config.init_std, self.config.seed)
        } else {
            ParamState::zeros(m, n)
        }
    }

    /// The AdaGram preconditioner, if this is an AdaGram variant.
    pub fn preconditioner(&self) -> Option<&PreconditionerState> {
        match &self.state {
            State::AdaGram(p) => Some(p),
            _ => None,
        }
    }

    pub fn step(&mut self, params: &mut ParamState, grad: &DMatrix<f64>) -> Result<()> {
        let lr = self.config.learning_rate;
        match &mut self.state {
            State::Sgd => sgd_step(params, grad, lr),
            State::AdaGradDiag(s) => s.step(params, grad, lr),
            State::AdaGradFull(s) => s.step(params, grad, lr),
            State::Shampoo(s) => s.step(params, grad, lr),
            State::AdaGram(p) => adagram_step(params, grad, p, lr),
        }
    }
}
