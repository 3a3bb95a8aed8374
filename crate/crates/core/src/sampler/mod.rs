//! Gibbs sampler for the spike-and-slab image regression.
//!
//! One sweep updates, in order, the latent surfaces `Z` and the noise
//! variance; then for each covariate `j = 0..=q` the local indicators, the
//! participation rate and the coefficient image; and finally the
//! within-image covariance `Σ`.

mod chain;
mod diagnostics;
mod updates;

pub use chain::{run_chain, run_chains, ChainConfig, ChainFailure, Init};
pub use diagnostics::{geweke_table, geweke_z, sparsity_discount, GewekeRow, GewekeTable};
pub use updates::{inclusion_probability, log_theta, slab_posterior, Gibbs, THETA_PI_CLAMP};
