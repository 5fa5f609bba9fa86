//! Eigen-adjusted functional principal component analysis.
//!
//! Curves `Y_i(t)` are observed with a covariate `z_i`. The covariance is
//! modelled as `Γ(s, t, z) = Σ_k λ_k(z) φ_k(s) φ_k(t)`: eigenfunctions are
//! shared across covariates while eigenvalues vary with `z`. The pipeline is
//!
//! 1. [`smooth::estimate_mean`]: local linear smoothing of `μ(t, z)`;
//! 2. [`smooth::estimate_pooled_cov`]: the covariate-pooled covariance with
//!    the measurement-error diagonal excluded;
//! 3. [`eigen::eigendecompose`]: quadrature eigen-decomposition of the pooled
//!    surface into an orthonormal [`eigen::EigenBasis`];
//! 4. [`eigenmap::wls_eigenvalues`] (or the score-based alternatives): the
//!    covariate-specific eigenvalues `λ_k(z)`;
//! 5. [`cluster::kmeans`] on the eigenvalue vectors for parcellation.
//!
//! [`sim`] holds the seeded generators and evaluation metrics used to check
//! the estimators against known truth.

// Indexed loops read better than iterator chains in most of the numerics here.
#![allow(clippy::needless_range_loop)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod data;
pub mod eigen;
pub mod eigenmap;
mod error;
pub mod grid;
pub mod kernel;
pub mod kv;
mod linalg;
pub mod rng;
pub mod sim;
pub mod smooth;

pub use error::{Error, Result};
