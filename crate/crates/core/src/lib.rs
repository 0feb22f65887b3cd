//! AdaGram: full-matrix adaptive gradient descent through an implicit inverse
//! factor of the gradient second-moment matrix.
//!
//! The preconditioner `G_t = εI + Σ g gᵀ` is never formed. Instead the crate
//! keeps a non-symmetric factor `L_t` with `G_t = L_t L_tᵀ`, whose inverse has
//! the shape `(I − A_t)/√ε`. `A_t` is either stored exactly as a growing product
//! `P Qᵀ` or as a rank-`r` factorization advanced by a projector-splitting
//! integrator or an incremental truncated SVD.
//!
//! Modules:
//!
//! * [`lowrank`] – rank-`r` factor updates under rank-one increments.
//! * [`precond`] – the implicit preconditioner backends.
//! * [`optim`] – AdaGram and the baseline optimizers behind one interface.
//! * [`glm`] – logistic / softmax regression loss, gradient and Hessian.
//! * [`data`] – synthetic correlated data and LIBSVM ingestion.
//! * [`bench`] – experiment runner, grid search and the invariant suite.
//!
//! Data-parallel loops (grid fan-out, invariant sequences, metric evaluation)
//! go through [`par`], which uses rayon when the `parallel` feature is on and
//! runs sequentially otherwise.

pub mod bench;
pub mod data;
mod error;
pub mod glm;
pub mod lowrank;
pub mod optim;
pub mod par;
pub mod precond;

pub use error::{Error, Result};
