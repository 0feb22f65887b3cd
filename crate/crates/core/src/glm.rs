//! Logistic (sigmoid) and multinomial (softmax) regression.
//!
//! Parameters are an `m×n` matrix: one row per output (`m = 1` for the binary
//! model, `m = K` classes for softmax) and one column per feature.

use nalgebra::{DMatrix, DVector};

use crate::par::{self, Execution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmModel {
    pub theta: DMatrix<f64>,
    pub link: Link,
}

impl GlmModel {
    /// Zero-initialized model: sigmoid for two classes, softmax otherwise.
    pub fn for_classes(n_classes: usize, n_features: usize) -> Self {
        if n_classes <= 2 {
            Self::from_theta(DMatrix::zeros(1, n_features), Link::Sigmoid)
        } else {
            Self::from_theta(DMatrix::zeros(n_classes, n_features), Link::Softmax)
        }
    }

    pub fn from_theta(theta: DMatrix<f64>, link: Link) -> Self {
        Self { theta, link }
    }

    pub fn n_outputs(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.theta.ncols()
    }

    fn n_labels(&self) -> usize {
        match self.link {
            Link::Sigmoid => 2,
            Link::Softmax => self.n_outputs(),
        }
    }

    fn score(&self, k: usize, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, xj)| self.theta[(k, j)] * xj)
            .sum()
    }

    /// Per-sample cross-entropy.
    pub fn sample_loss(&self, x: &[f64], y: usize) -> f64 {
        match self.link {
            Link::Sigmoid => {
                let z = self.score(0, x);
                softplus(z) - if y == 1 { z } else { 0.0 }
            }
            Link::Softmax => {
                let z: Vec<f64> = (0..self.n_outputs()).map(|k| self.score(k, x)).collect();
                log_sum_exp(&z) - z[y]
            }
        }
    }

    /// Most likely label for one sample.
    pub fn predict(&self, x: &[f64]) -> usize {
        match self.link {
            Link::Sigmoid => usize::from(self.score(0, x) > 0.0),
            Link::Softmax => (0..self.n_outputs())
                .map(|k| (k, self.score(k, x)))
                .fold((0, f64::NEG_INFINITY), |best, (k, z)| if z > best.1 { (k, z) } else { best })
                .0,
        }
    }

    fn check(&self, batch: &Batch<'_>) -> Result<()> {
        if batch.n_features != self.n_features() {
            return Err(Error::dims("batch features", self.n_features(), batch.n_features));
        }
        let limit = self.n_labels();
        if let Some(bad) = batch.y.iter().find(|&&y| y >= limit) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for a model with {limit} labels"
            )));
        }
        Ok(())
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Row-major `b×n` features with their labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    x: &'a [f64],
    y: &'a [usize],
    n_features: usize,
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a [f64], y: &'a [usize], n_features: usize) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidArgument("batch must hold at least one sample".into()));
        }
        if x.len() != y.len() * n_features {
            return Err(Error::dims("batch feature values", y.len() * n_features, x.len()));
        }
        Ok(Self { x, y, n_features })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.y[i]
    }
}

/// Mean cross-entropy over the batch.
pub fn loss(model: &GlmModel, batch: &Batch<'_>) -> Result<f64> {
    loss_with(model, batch, Execution::Sequential)
}

/// [`loss`] with the per-sample terms evaluated under `exec`.
///
/// Terms are sorted before summation, so the result is a function of the
/// multiset of samples: identical under any execution mode or sample order.
pub fn loss_with(model: &GlmModel, batch: &Batch<'_>, exec: Execution) -> Result<f64> {
    model.check(batch)?;
    let mut terms = par::map_range(exec, batch.len(), |i| {
        model.sample_loss(batch.row(i), batch.label(i))
    });
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() / batch.len() as f64)
}

/// Fraction of correctly classified samples.
pub fn accuracy_with(model: &GlmModel, batch: &Batch<'_>, exec: Execution) -> Result<f64> {
    model.check(batch)?;
    let hits = par::map_range(exec, batch.len(), |i| {
        usize::from(model.predict(batch.row(i)) == batch.label(i))
    });
    Ok(hits.iter().sum::<usize>() as f64 / batch.len() as f64)
}

/// `(1/b) Σ (σ(θᵀx) − y) x` (binary) or `(1/b) Σ (p − onehot(y)) xᵀ` (softmax),
/// summed in batch order.
pub fn gradient(model: &GlmModel, batch: &Batch<'_>) -> Result<DMatrix<f64>> {
    model.check(batch)?;
    let (m, n) = model.theta.shape();
    let mut grad = DMatrix::<f64>::zeros(m, n);
    for i in 0..batch.len() {
        let x = batch.row(i);
        let y = batch.label(i);
        match model.link {
            Link::Sigmoid => {
                let r = sigmoid(model.score(0, x)) - y as f64;
                for (j, xj) in x.iter().enumerate() {
                    grad[(0, j)] += r * xj;
                }
            }
            Link::Softmax => {
                let z: Vec<f64> = (0..m).map(|k| model.score(k, x)).collect();
                let p = softmax(&z);
                for (k, pk) in p.iter().enumerate() {
                    let r = pk - if k == y { 1.0 } else { 0.0 };
                    for (j, xj) in x.iter().enumerate() {
                        grad[(k, j)] += r * xj;
                    }
                }
            }
        }
    }
    Ok(grad / batch.len() as f64)
}

/// `H = (1/b) Xᵀ diag(p(1−p)) X` for the binary model. Diagnostic only: it is
/// never used by an optimizer.
pub fn batch_hessian(model: &GlmModel, batch: &Batch<'_>) -> Result<DMatrix<f64>> {
    if model.link != Link::Sigmoid {
        return Err(Error::Unsupported("batch Hessian of a softmax model"));
    }
    model.check(batch)?;
    let n = model.n_features();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..batch.len() {
        let x = DVector::from_column_slice(batch.row(i));
        let p = sigmoid(model.score(0, x.as_slice()));
        h.ger(p * (1.0 - p), &x, &x, 1.0);
    }
    Ok(h / batch.len() as f64)
}
