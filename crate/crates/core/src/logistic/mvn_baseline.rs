use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::LogisticModel;
use crate::data::GlmDataset;
use crate::dist::{log_logistic_density, RngStream};
use crate::linalg::{linear_predictor, weighted_gram};
use crate::mh::{CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

/// Metropolis-Hastings with proposal `N(theta, I(theta)^-1)`, where
/// `I = X' diag(e^eta / (1 + e^eta)^2) X` is the Fisher information.
/// Since `I` depends on the centre, the ratio carries the proposal-density
/// correction.
#[derive(Clone, Debug)]
pub struct LogisticMvnModel {
    inner: LogisticModel,
}

/// `log q(theta | theta*) - log q(theta* | theta)` for normal proposals
/// centred at the current point with precisions `info_current` (at theta)
/// and `info_proposed` (at theta*).
pub fn mvn_proposal_correction(
    theta: &DVector<f64>,
    proposed: &DVector<f64>,
    info_current: &DMatrix<f64>,
    info_proposed: &DMatrix<f64>,
) -> Result<f64> {
    let dim = theta.len();
    let lc = Cholesky::new(info_current.clone()).ok_or_else(|| Error::numerical("Fisher information at current state", dim))?;
    let lp = Cholesky::new(info_proposed.clone()).ok_or_else(|| Error::numerical("Fisher information at proposal", dim))?;
    let d = proposed - theta;
    let back = log_density(&lp, &d);
    let fwd = log_density(&lc, &d);
    Ok(back - fwd)
}

fn log_density(chol: &Cholesky<f64, Dyn>, d: &DVector<f64>) -> f64 {
    let l = chol.l();
    let half_log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
    half_log_det - 0.5 * l.tr_mul(d).norm_squared()
}

impl LogisticMvnModel {
    pub fn new(data: &GlmDataset) -> Result<Self> {
        Ok(Self { inner: LogisticModel::new(data)? })
    }

    pub fn with_initial_theta(mut self, theta: DVector<f64>) -> Result<Self> {
        self.inner = self.inner.with_initial_theta(theta)?;
        Ok(self)
    }

    pub fn information(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let w: Vec<f64> = linear_predictor(self.inner.x(), theta).into_iter().map(|e| log_logistic_density(e).exp()).collect();
        weighted_gram(self.inner.x(), &w, None)
    }
}

impl CdaModel for LogisticMvnModel {
    type Latents = ();
    type Hypers = ();

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn calibration_len(&self) -> usize {
        1
    }

    fn initial_state(&self) -> ChainState<(), ()> {
        ChainState { theta: self.inner.initial_state().theta, latents: (), hypers: () }
    }

    fn coord_names(&self) -> Vec<String> {
        self.inner.coord_names()
    }

    fn calibrate(&self, _: &ChainState<(), ()>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        Ok(prev.clone())
    }

    fn propose(&self, state: &mut ChainState<(), ()>, _: &CalibrationParams, rng: &mut RngStream) -> Result<Proposal> {
        let dim = self.dim();
        let chol = Cholesky::new(self.information(&state.theta))
            .ok_or_else(|| Error::numerical("Fisher information is singular", dim))?;
        let e = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = chol.l().tr_solve_lower_triangular(&e).expect("positive diagonal");
        let cond_var = chol.inverse().diagonal().iter().copied().collect();
        Ok(Proposal { theta: &state.theta + step, cond_var })
    }

    fn log_target(&self, theta: &DVector<f64>, _: &()) -> f64 {
        self.inner.exact_loglik(theta)
    }

    fn log_proposal_marginal(&self, theta: &DVector<f64>, _: &(), _: &CalibrationParams) -> f64 {
        self.inner.exact_loglik(theta)
    }

    fn log_ratio(&self, state: &ChainState<(), ()>, proposed: &DVector<f64>, _: &CalibrationParams) -> Result<Vec<f64>> {
        let target = self.inner.exact_loglik(proposed) - self.inner.exact_loglik(&state.theta);
        let info_new = self.information(proposed);
        // a proposal whose own information is singular has no reverse move
        if Cholesky::new(info_new.clone()).is_none() {
            return Ok(vec![f64::NEG_INFINITY]);
        }
        let corr = mvn_proposal_correction(&state.theta, proposed, &self.information(&state.theta), &info_new)?;
        Ok(vec![target + corr])
    }
}
