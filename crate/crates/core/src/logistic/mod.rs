//! Logistic models with Polya-Gamma augmentation.
//!
//! Under `(r, b)` each observation contributes
//! `exp(y (eta + b)) / (1 + exp(eta + b))^r`, and with
//! `z ~ PG(r, |eta + b|)` the parameter conditional is Gaussian.

mod calibrate;
mod collapsed;
mod mvn_baseline;
mod regression;
mod subsample;

pub use calibrate::{fisher_factor, logistic_b, logistic_calibration, logistic_r};
pub use collapsed::CollapsedLogisticModel;
pub use mvn_baseline::{mvn_proposal_correction, LogisticMvnModel};
pub use regression::LogisticModel;
pub use subsample::{SubsampleLatents, SubsampledLogisticModel};

use crate::dist::log1p_exp;

/// `y (eta + b) - r log(1 + exp(eta + b))`, with `(1, 0)` the exact term.
#[inline]
pub fn logistic_obs_loglik(y: f64, eta: f64, r: f64, b: f64) -> f64 {
    let psi = eta + b;
    y * psi - r * log1p_exp(psi)
}
