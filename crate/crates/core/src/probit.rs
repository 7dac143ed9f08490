//! Probit regression with truncated-normal augmentation.
//!
//! Latents `z_i ~ N(x_i theta + b_i, r_i)` truncated to `[0, inf)` when
//! `y_i = 1` and `(-inf, 0]` otherwise; under a flat prior
//! `theta | z ~ N((X'R^-1 X)^-1 X'R^-1 (z - b), (X'R^-1 X)^-1)`. Marginally
//! `P(y_i = 1) = Phi((x_i theta + b_i) / sqrt(r_i))`.

use nalgebra::{DMatrix, DVector};

use crate::data::GlmDataset;
use crate::dist::{
    log_normal_cdf, log_normal_pdf, normal_quantile, sample_truncated_normal, NeumaierSum, PrecisionGaussian,
    RngStream, TruncationInterval,
};
use crate::linalg::{linear_predictor, weighted_gram, xt_vec};
use crate::mh::{CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

/// `r` is clamped here when `Phi(eta) Phi(-eta) / phi(eta)^2` overflows.
pub const MAX_R: f64 = 1e300;

/// Fisher-matched `(r, b)` at linear predictor `eta`:
/// `r = Phi(eta) Phi(-eta) / phi(eta)^2`, `b = eta (sqrt(r) - 1)`.
pub fn probit_calibration(eta: f64) -> (f64, f64) {
    let log_r = log_normal_cdf(eta) + log_normal_cdf(-eta) - 2.0 * log_normal_pdf(eta);
    let r = log_r.exp().min(MAX_R);
    (r, eta * (r.sqrt() - 1.0))
}

/// Log-likelihood of one observation under `(r, b)`.
#[inline]
pub fn probit_obs_loglik(y: bool, eta: f64, r: f64, b: f64) -> f64 {
    let t = (eta + b) / r.sqrt();
    if y {
        log_normal_cdf(t)
    } else {
        log_normal_cdf(-t)
    }
}

#[derive(Clone, Debug)]
pub struct ProbitModel {
    x: DMatrix<f64>,
    y: Vec<bool>,
    init: DVector<f64>,
}

impl ProbitModel {
    pub fn new(data: &GlmDataset) -> Result<Self> {
        let y = data.binary_outcomes()?;
        let x = data.x.clone();
        let p = x.ncols();
        let gram = weighted_gram(&x, &vec![1.0; x.nrows()], None);
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::numerical("design matrix is rank deficient", p))?;
        // start at the projection of the constant probit fit onto the columns of X
        let n = y.len() as f64;
        let s = y.iter().filter(|&&v| v).count() as f64;
        let q = normal_quantile((s + 0.5) / (n + 1.0))?;
        let init = chol.solve(&xt_vec(&x, &vec![q; x.nrows()], None));
        Ok(Self { x, y, init })
    }

    /// Intercept-only model with `s` successes among `n`.
    pub fn intercept_only(n: usize, s: usize) -> Result<Self> {
        Self::new(&GlmDataset::intercept_only(n, s)?)
    }

    pub fn with_initial_theta(mut self, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != self.x.ncols() {
            return Err(Error::param("initial theta has the wrong length"));
        }
        self.init = theta;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[bool] {
        &self.y
    }

    /// Calibrated log-likelihood `sum_i log Phi(+-(eta_i + b_i) / sqrt(r_i))`.
    pub fn loglik(&self, theta: &DVector<f64>, calib: &CalibrationParams) -> f64 {
        let eta = linear_predictor(&self.x, theta);
        let mut acc = NeumaierSum::new();
        for (i, (&y, &e)) in self.y.iter().zip(eta.iter()).enumerate() {
            acc.add(probit_obs_loglik(y, e, calib.r[i], calib.b[i]));
        }
        acc.value()
    }

    /// Exact probit log-likelihood.
    pub fn exact_loglik(&self, theta: &DVector<f64>) -> f64 {
        let eta = linear_predictor(&self.x, theta);
        eta.iter().zip(&self.y).map(|(&e, &y)| probit_obs_loglik(y, e, 1.0, 0.0)).collect::<NeumaierSum>().value()
    }

    /// Draws the latents given `theta` under `(r, b)`.
    pub fn sample_latents(&self, theta: &DVector<f64>, calib: &CalibrationParams, rng: &mut RngStream) -> Result<Vec<f64>> {
        let eta = linear_predictor(&self.x, theta);
        let pos = TruncationInterval::positive();
        let neg = TruncationInterval::negative();
        (0..self.n())
            .map(|i| {
                let side = if self.y[i] { pos } else { neg };
                sample_truncated_normal(eta[i] + calib.b[i], calib.r[i], side, rng)
            })
            .collect()
    }

    /// Gaussian conditional of `theta` given the latents.
    pub fn conditional(&self, z: &[f64], calib: &CalibrationParams) -> Result<PrecisionGaussian> {
        let w: Vec<f64> = calib.r.iter().map(|r| 1.0 / r).collect();
        let resid: Vec<f64> = (0..self.n()).map(|i| (z[i] - calib.b[i]) * w[i]).collect();
        PrecisionGaussian::new(weighted_gram(&self.x, &w, None), &xt_vec(&self.x, &resid, None))
    }

    /// Per-observation `(r, b)` at the linear predictor of `theta`.
    pub fn calibration_at(&self, theta: &DVector<f64>, epsilon: f64) -> CalibrationParams {
        let (r, b) = linear_predictor(&self.x, theta).into_iter().map(probit_calibration).unzip();
        CalibrationParams { r, b, epsilon, frozen: false }
    }
}

impl CdaModel for ProbitModel {
    type Latents = Vec<f64>;
    type Hypers = ();

    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn calibration_len(&self) -> usize {
        self.n()
    }

    fn initial_state(&self) -> ChainState<Vec<f64>, ()> {
        ChainState { theta: self.init.clone(), latents: Vec::new(), hypers: () }
    }

    fn coord_names(&self) -> Vec<String> {
        (0..self.dim()).map(|j| format!("theta{j}")).collect()
    }

    fn calibrate(&self, state: &ChainState<Vec<f64>, ()>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        Ok(self.calibration_at(&state.theta, prev.epsilon))
    }

    fn propose(
        &self,
        state: &mut ChainState<Vec<f64>, ()>,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<Proposal> {
        state.latents = self.sample_latents(&state.theta, calib, rng)?;
        let g = self.conditional(&state.latents, calib)?;
        let cond_var = g.covariance().diagonal().iter().copied().collect();
        Ok(Proposal { theta: g.sample(rng), cond_var })
    }

    fn log_target(&self, theta: &DVector<f64>, _: &()) -> f64 {
        self.exact_loglik(theta)
    }

    fn log_proposal_marginal(&self, theta: &DVector<f64>, _: &(), calib: &CalibrationParams) -> f64 {
        self.loglik(theta, calib)
    }

    fn log_ratio(
        &self,
        state: &ChainState<Vec<f64>, ()>,
        proposed: &DVector<f64>,
        calib: &CalibrationParams,
    ) -> Result<Vec<f64>> {
        let eta = linear_predictor(&self.x, &state.theta);
        let eta_new = linear_predictor(&self.x, proposed);
        let mut acc = NeumaierSum::new();
        // Intercept-only and tied designs repeat inputs; reuse the last term.
        let mut last: Option<([f64; 5], f64)> = None;
        for i in 0..self.n() {
            let (y, r, b) = (self.y[i], calib.r[i], calib.b[i]);
            let key = [f64::from(u8::from(y)), eta[i], eta_new[i], r, b];
            let term = match last {
                Some((k, t)) if k == key => t,
                _ => {
                    let target =
                        probit_obs_loglik(y, eta_new[i], 1.0, 0.0) - probit_obs_loglik(y, eta[i], 1.0, 0.0);
                    let marginal = probit_obs_loglik(y, eta_new[i], r, b) - probit_obs_loglik(y, eta[i], r, b);
                    let t = target - marginal;
                    last = Some((key, t));
                    t
                }
            };
            acc.add(term);
        }
        Ok(vec![acc.value()])
    }
}
