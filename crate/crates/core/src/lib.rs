//! Bayesian image-on-scalar regression with a spatial global-local
//! spike-and-slab prior on the coefficient images and an Inverse-Wishart
//! process prior on the within-image covariance.
//!
//! The crate covers the whole workflow:
//!
//! * [`model`]: domain types (grid, dataset, hyperparameters, chain state) and validation.
//! * [`kernels`]: Matérn-5/2 kernel, scale-matrix construction, empirical kernel
//!   fitting and Inverse-Wishart draws in the Dawid parameterization.
//! * [`sampler`]: the three-block Gibbs sampler, chain driver, posterior
//!   summaries and Geweke diagnostics.
//! * [`simulate`]: the two simulation scenarios with ground truth.
//! * [`mua`]: the mass-univariate baseline (per-site OLS, Simes, BH/BY/SBH).
//! * [`metrics`]: selection and estimation metrics.
//! * [`io`]: the `BIOSR1` binary format, CSV files, traces and summaries.
//!
//! `Y` is never centered; the intercept image absorbs the mean.

pub mod error;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod mua;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
pub use faer::Mat;
pub use model::{
    validate, ChainState, Dataset, Hyperparams, IndicatorMatrix, LocationGrid, MaternKernel,
    ModelContext, PosteriorSummary,
};
