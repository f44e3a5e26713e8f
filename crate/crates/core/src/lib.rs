//! Randomized Nyström approximation of symmetric positive semi-definite
//! matrices and quadrature-discretized kernel integral operators, sketched
//! with correlated Gaussian test matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense symmetric linear algebra (eigendecomposition, Schatten
//!   norms, PSD square roots, jittered Cholesky, pseudoinverse, matrix text IO).
//! - [`sketch`]: correlated Gaussian sketches `Ω ~ N(0, K)` and the partitioned
//!   covariance `K̃ = UᵀKU` with its Schur complement.
//! - [`approx`]: plain and shift-stabilized Nyström, randomized SVD, error norms.
//! - [`bounds`]: quality factors, expectation and tail bounds, rSVD bounds and
//!   Monte Carlo audits of all of them.
//! - [`gaussmoments`]: closed-form Gaussian / inverse-Wishart moments with
//!   Monte Carlo estimators.
//! - [`kernels`]: kernel catalogue and weighted quadrature discretization.
//! - [`gpsample`]: Gaussian process sampling from a low-rank factorization.
//! - [`experiment`]: config-driven error-curve sweeps written as CSV.
//!
//! Trial-level loops run on rayon when the `parallel` feature is enabled
//! (default) and sequentially otherwise; see [`par`].

pub mod approx;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod gaussmoments;
pub mod gpsample;
pub mod kernels;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod sketch;

pub use error::{Error, Result};
pub use linalg::{SchattenNorm, SpsdMatrix};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
