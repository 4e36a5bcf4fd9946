//! Shapley attribution of out-of-sample R^2 for least-squares regression.
//!
//! Fitting a regression on every subset of features is the textbook way to
//! attribute performance, but it costs 2^p fits. This crate implements a
//! much faster route: reduce the data once to a p x p triangular form, then
//! solve whole chains of nested subsets with a single refactorization each,
//! and average the resulting per-feature R^2 lifts over sampled feature
//! orderings. The average over all p! orderings is exactly the Shapley
//! value of the out-of-sample R^2; sampling orderings instead gives an
//! unbiased estimate whose error is tracked batch by batch and reported as
//! quantiles of a normal approximation.
//!
//! The pieces are usable on their own:
//!
//! - [`reduction`]: centering, QR and Gram/Cholesky reduction, ridge
//!   stacking.
//! - [`chains`]: nested least-squares solves along one feature ordering.
//! - [`sampling`]: uniform and argsort quasi-Monte Carlo permutation
//!   sources, with a scrambled Sobol' generator.
//! - [`estimator`]: streaming mean/covariance, risk quantiles, exact
//!   Shapley enumeration for small p.
//! - [`pipeline`]: the batched end-to-end run.
//! - [`synthdata`]: reproducible synthetic problems.
//! - [`naive`]: slow raw-data reference implementations.
//!
//! # Example
//!
//! ```
//! use lsq_shapley::{attribute, RunConfig, SynthSpec};
//!
//! let spec = SynthSpec { p: 8, n_train: 400, n_test: 400, seed: 7 };
//! let (train, test, _) = lsq_shapley::gen_dataset(&spec).unwrap();
//! let config = RunConfig::for_dimension(8);
//! let result = attribute(&train, &test, &config).unwrap();
//! let total: f64 = result.shapley.iter().sum();
//! assert!((total - result.r2_full).abs() < 1e-8);
//! ```

pub mod chains;
pub mod error;
pub mod estimator;
mod linalg;
pub mod naive;
pub mod pipeline;
pub mod reduction;
pub mod sampling;
pub mod synthdata;

pub use chains::{LiftVector, Permutation};
pub use error::{Error, Result};
pub use estimator::{exact_shapley, RiskReport};
pub use pipeline::{
    attribute, r2_full, select_ridge_lambda, AttributionResult, BatchRecord, ReductionPath,
    RunConfig,
};
pub use reduction::{Dataset, ReducedData};
pub use sampling::{SamplerConfig, SamplerKind};
pub use synthdata::{gen_dataset, gen_toy, SynthSpec};
