//! Hierarchical binomial model:
//! `y_i ~ Binom(N_i, logistic(theta_i))`, `theta_i ~ N(theta0, sigma2)`,
//! `theta0 ~ N(mu0, v0)` and a flat prior on `sigma2`.
//!
//! Units are conditionally independent given `(theta0, sigma2)`, so each
//! unit gets its own latent `z_i ~ PG(N_i r_i, theta_i + b_i)` and its own
//! accept/reject decision.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::GlmDataset;
use crate::dist::{log1p_exp, sample_inverse_gamma, NeumaierSum, PolyaGammaSampler, RngStream};
use crate::logistic::logistic_calibration;
use crate::mh::{Blocks, CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HierHypers {
    pub theta0: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug)]
pub struct HierBinomialModel {
    y: Vec<f64>,
    trials: Vec<f64>,
    prior_mean_loc: f64,
    prior_var_loc: f64,
    pg: PolyaGammaSampler,
    init: HierHypers,
}

impl HierBinomialModel {
    /// Uses the dataset's outcomes and trial counts; the design matrix is ignored.
    pub fn new(data: &GlmDataset) -> Result<Self> {
        let trials = data.trials.clone().ok_or_else(|| Error::Data("hierarchical binomial needs trial counts".into()))?;
        let y = data.count_outcomes()?;
        Self::from_counts(y, trials)
    }

    pub fn from_counts(y: Vec<f64>, trials: Vec<f64>) -> Result<Self> {
        if y.len() < 5 {
            return Err(Error::param(format!("need at least 5 units for a proper variance update, got {}", y.len())));
        }
        if y.len() != trials.len() {
            return Err(Error::Data("outcomes and trial counts differ in length".into()));
        }
        for (i, (&yi, &ni)) in y.iter().zip(&trials).enumerate() {
            if !(ni >= 1.0 && yi >= 0.0 && yi <= ni) {
                return Err(Error::Data(format!("unit {i}: need 0 <= y <= N and N >= 1, got y={yi}, N={ni}")));
            }
        }
        Ok(Self {
            y,
            trials,
            prior_mean_loc: -12.0,
            prior_var_loc: 49.0,
            pg: PolyaGammaSampler::default(),
            init: HierHypers { theta0: -12.0, sigma2: 1.0 },
        })
    }

    pub fn with_location_prior(mut self, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::param("location prior variance must be positive"));
        }
        self.prior_mean_loc = mean;
        self.prior_var_loc = var;
        Ok(self)
    }

    pub fn with_initial_hypers(mut self, h: HierHypers) -> Self {
        self.init = h;
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn floor(&self, i: usize, epsilon: f64) -> f64 {
        (self.y[i] - 1.0) / self.trials[i] + epsilon
    }

    /// Unit log-likelihood under `(r, b)`.
    pub fn unit_loglik(&self, i: usize, theta: f64, r: f64, b: f64) -> f64 {
        let psi = theta + b;
        self.y[i] * psi - self.trials[i] * r * log1p_exp(psi)
    }

    fn unit_log_ratio(&self, i: usize, theta: f64, proposed: f64, r: f64, b: f64) -> f64 {
        let n = self.trials[i];
        // y terms and the Gaussian prior cancel
        let target = -n * (log1p_exp(proposed) - log1p_exp(theta));
        let marginal = -n * r * (log1p_exp(proposed + b) - log1p_exp(theta + b));
        target - marginal
    }

    /// `(mean, var)` of `theta0 | theta, sigma2`.
    pub fn theta0_conditional(&self, theta: &[f64], sigma2: f64) -> (f64, f64) {
        let n = theta.len() as f64;
        let var = 1.0 / (n / sigma2 + 1.0 / self.prior_var_loc);
        let mean = var * (theta.iter().sum::<f64>() / sigma2 + self.prior_mean_loc / self.prior_var_loc);
        (mean, var)
    }

    /// Draws `theta0` then `sigma2 ~ IG(n/2 - 1, sum (theta_i - theta0)^2 / 2)`.
    pub fn sample_hypers(&self, theta: &[f64], sigma2: f64, rng: &mut RngStream) -> Result<HierHypers> {
        let (m, v) = self.theta0_conditional(theta, sigma2);
        let theta0 = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let ss: f64 = theta.iter().map(|t| (t - theta0).powi(2)).sum();
        let sigma2 = sample_inverse_gamma(theta.len() as f64 / 2.0 - 1.0, (0.5 * ss).max(1e-30), rng)?;
        Ok(HierHypers { theta0, sigma2 })
    }
}

impl CdaModel for HierBinomialModel {
    type Latents = Vec<f64>;
    type Hypers = HierHypers;

    fn dim(&self) -> usize {
        self.n()
    }

    fn calibration_len(&self) -> usize {
        self.n()
    }

    fn blocks(&self) -> Blocks {
        Blocks::PerCoordinate
    }

    fn initial_state(&self) -> ChainState<Vec<f64>, HierHypers> {
        let theta = self.y.iter().zip(&self.trials).map(|(&y, &n)| ((y + 0.5) / (n - y + 0.5)).ln());
        ChainState { theta: DVector::from_iterator(self.n(), theta), latents: Vec::new(), hypers: self.init }
    }

    fn coord_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n()).map(|i| format!("theta{i}")).collect();
        names.push("theta0".into());
        names.push("sigma2".into());
        names
    }

    fn check_calibration(&self, calib: &CalibrationParams) -> Result<()> {
        calib.validate(self.n())?;
        calib.check_floor(|i| self.floor(i, calib.epsilon))
    }

    fn calibrate(&self, state: &ChainState<Vec<f64>, HierHypers>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        let (r, b) = (0..self.n())
            .map(|i| logistic_calibration(state.theta[i], prev.b[i], self.floor(i, prev.epsilon)))
            .unzip();
        Ok(CalibrationParams { r, b, epsilon: prev.epsilon, frozen: false })
    }

    fn propose(
        &self,
        state: &mut ChainState<Vec<f64>, HierHypers>,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<Proposal> {
        let HierHypers { theta0, sigma2 } = state.hypers;
        let n = self.n();
        let mut z = Vec::with_capacity(n);
        let mut theta = DVector::zeros(n);
        let mut cond_var = Vec::with_capacity(n);
        for i in 0..n {
            let (r, b) = (calib.r[i], calib.b[i]);
            let zi = self.pg.sample(self.trials[i] * r, state.theta[i] + b, rng)?;
            let prec = zi + 1.0 / sigma2;
            let mean = (self.y[i] - 0.5 * r * self.trials[i] - zi * b + theta0 / sigma2) / prec;
            theta[i] = mean + (1.0 / prec).sqrt() * rng.sample::<f64, _>(StandardNormal);
            cond_var.push(1.0 / prec);
            z.push(zi);
        }
        state.latents = z;
        Ok(Proposal { theta, cond_var })
    }

    fn log_target(&self, theta: &DVector<f64>, h: &HierHypers) -> f64 {
        self.log_proposal_marginal(theta, h, &CalibrationParams::identity(self.n(), 1.0))
    }

    fn log_proposal_marginal(&self, theta: &DVector<f64>, h: &HierHypers, calib: &CalibrationParams) -> f64 {
        (0..self.n())
            .map(|i| {
                self.unit_loglik(i, theta[i], calib.r[i], calib.b[i]) - 0.5 * (theta[i] - h.theta0).powi(2) / h.sigma2
            })
            .collect::<NeumaierSum>()
            .value()
            - 0.5 * self.n() as f64 * h.sigma2.ln()
    }

    fn log_ratio(
        &self,
        state: &ChainState<Vec<f64>, HierHypers>,
        proposed: &DVector<f64>,
        calib: &CalibrationParams,
    ) -> Result<Vec<f64>> {
        Ok((0..self.n()).map(|i| self.unit_log_ratio(i, state.theta[i], proposed[i], calib.r[i], calib.b[i])).collect())
    }

    fn update_hypers(&self, state: &mut ChainState<Vec<f64>, HierHypers>, rng: &mut RngStream) -> Result<()> {
        state.hypers = self.sample_hypers(state.theta.as_slice(), state.hypers.sigma2, rng)?;
        Ok(())
    }

    fn record(
        &self,
        state: &ChainState<Vec<f64>, HierHypers>,
        cond_var: &[f64],
        values: &mut Vec<f64>,
        cond_vars: &mut Vec<f64>,
    ) {
        values.extend(state.theta.iter());
        values.push(state.hypers.theta0);
        values.push(state.hypers.sigma2);
        cond_vars.extend_from_slice(cond_var);
        cond_vars.extend([f64::NAN, f64::NAN]);
    }
}
