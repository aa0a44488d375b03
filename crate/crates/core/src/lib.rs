//! Joint link prediction and feature-dynamics estimation for time-evolving graphs.
//!
//! The next adjacency matrix `A_{T+1}` and the VAR matrix `W` driving a linear
//! feature map of the snapshots are estimated together by minimizing a
//! least-squares criterion penalized by the trace norm and the ℓ1 norm of `A`
//! and the ℓ1 norm of `W`. The problem is solved by generalized
//! forward-backward splitting.
//!
//! Module map:
//! - [`matio`]: graph sequences, MatrixMarket I/O, experiment configs.
//! - [`features`]: linear feature maps, adjoints and observable variance terms.
//! - [`prox`]: proximal operators and a deterministic SVD.
//! - [`objective`]: the joint loss, its gradient, the mixed error and the Lipschitz constant.
//! - [`solver`]: the generalized forward-backward solver.
//! - [`generator`]: synthetic sequences with autoregressive features.
//! - [`baselines`]: comparison methods and the method registry.
//! - [`tuning`]: data-driven penalties, cross-validation and concentration diagnostics.
//! - [`bench`]: AUC, experiment orchestration and sweeps.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod features;
pub mod generator;
pub mod matio;
pub mod objective;
pub mod prox;
pub mod rng;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
