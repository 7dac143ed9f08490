//! Calibrated data-augmentation (CDA) MCMC.
//!
//! Data-augmentation Gibbs samplers for GLMs mix badly on large, imbalanced
//! data because the conditional posterior of the parameters given the latent
//! variables is far narrower than the marginal posterior. The samplers here
//! rescale the latent-variable distributions with per-observation working
//! parameters `(r, b)`, use the resulting Gibbs sweep as a Metropolis-Hastings
//! proposal and correct back to the exact posterior.
//!
//! Modules:
//! - [`dist`]: random variates (truncated normal, Polya-Gamma, precision-form
//!   multivariate normal, inverse gamma) and normal-distribution special functions.
//! - [`mh`]: the model-agnostic accept/reject step, adaptation schedule and traces.
//! - [`probit`], [`logistic`], [`hier_binomial`], [`poisson`]: model kernels.
//! - [`diagnostics`]: ACF, ESS, missing-information estimates and chain summaries.
//! - [`data`]: datasets, synthetic rare-event generators and CSV input.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Frozen reference values keep every digit the oracle printed.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod data;
pub mod diagnostics;
pub mod dist;
mod error;
pub mod hier_binomial;
mod linalg;
pub mod logistic;
pub mod mh;
pub mod poisson;
pub mod probit;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use mh::{
    run_chain, Blocks, CalibrationParams, CdaModel, ChainRunner, ChainState, SamplerConfig,
    SamplerKind, Trace,
};
