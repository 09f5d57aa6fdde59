//! Spectral regularization for statistical inverse learning.
//!
//! The crate models a linear inverse problem `g = A f` observed through noisy
//! point evaluations `y_i = g(x_i) + e_i`, fits spectral regularization
//! estimators (cut-off, Tikhonov, Landweber) and provides the tooling to check
//! their convergence rates: effective dimension, minimax packing
//! constructions, concentration coverage checks and a Monte Carlo rate
//! harness.
//!
//! The built-in instance is numerical differentiation on `[0, 1]`, with kernel
//! `K(x, t) = min(x, t) - x t` and eigenvalues `1 / (pi j)^2`.

// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod concentration;
pub mod effdim;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod minimax;
pub mod problem;
pub mod sampling;
pub mod spectral;

pub use error::{Error, Result};
