use nalgebra::{DMatrix, DVector};

use super::{logistic_calibration, logistic_obs_loglik};
use crate::data::GlmDataset;
use crate::dist::{NeumaierSum, PolyaGammaSampler, PrecisionGaussian, RngStream};
use crate::linalg::{glm_newton, linear_predictor, weighted_gram, xt_vec};
use crate::mh::{CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

/// Logistic regression under a flat prior.
#[derive(Clone, Debug)]
pub struct LogisticModel {
    x: DMatrix<f64>,
    y: Vec<f64>,
    init: DVector<f64>,
    pg: PolyaGammaSampler,
}

impl LogisticModel {
    pub fn new(data: &GlmDataset) -> Result<Self> {
        data.binary_outcomes()?;
        let x = data.x.clone();
        let n = data.n();
        let p = x.ncols();
        let chol = weighted_gram(&x, &vec![1.0; n], None)
            .cholesky()
            .ok_or_else(|| Error::numerical("design matrix is rank deficient", p))?;
        let s = data.sum_y();
        let q = ((s + 0.5) / (n as f64 - s + 0.5)).ln();
        let start = chol.solve(&xt_vec(&x, &vec![q; n], None));
        let y = data.y.clone();
        let score = |i: usize, e: f64| {
            let p = 1.0 / (1.0 + (-e).exp());
            (y[i] - p, p * (1.0 - p))
        };
        // start at the MLE when it exists; adapting from a poor start can
        // freeze (r, b) far from the posterior
        let init = glm_newton(&x, &start, score, 100).unwrap_or(start);
        Ok(Self { x, y, init, pg: PolyaGammaSampler::default() })
    }

    pub fn with_initial_theta(mut self, theta: DVector<f64>) -> Result<Self> {
        if theta.len() != self.x.ncols() {
            return Err(Error::param("initial theta has the wrong length"));
        }
        self.init = theta;
        Ok(self)
    }

    pub fn with_pg_sampler(mut self, pg: PolyaGammaSampler) -> Self {
        self.pg = pg;
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `sum_i y_i (eta_i + b_i) - r_i log(1 + exp(eta_i + b_i))`.
    pub fn loglik(&self, theta: &DVector<f64>, calib: &CalibrationParams) -> f64 {
        let eta = linear_predictor(&self.x, theta);
        (0..self.n()).map(|i| logistic_obs_loglik(self.y[i], eta[i], calib.r[i], calib.b[i])).collect::<NeumaierSum>().value()
    }

    pub fn exact_loglik(&self, theta: &DVector<f64>) -> f64 {
        let eta = linear_predictor(&self.x, theta);
        eta.iter().zip(&self.y).map(|(&e, &y)| logistic_obs_loglik(y, e, 1.0, 0.0)).collect::<NeumaierSum>().value()
    }

    pub fn sample_latents(&self, theta: &DVector<f64>, calib: &CalibrationParams, rng: &mut RngStream) -> Result<Vec<f64>> {
        let eta = linear_predictor(&self.x, theta);
        (0..self.n()).map(|i| self.pg.sample(calib.r[i], eta[i] + calib.b[i], rng)).collect()
    }

    /// `theta | z ~ N((X'ZX)^-1 X'(y - r/2 - Z b), (X'ZX)^-1)`.
    pub fn conditional(&self, z: &[f64], calib: &CalibrationParams) -> Result<PrecisionGaussian> {
        let kappa: Vec<f64> = (0..self.n()).map(|i| self.y[i] - 0.5 * calib.r[i] - z[i] * calib.b[i]).collect();
        PrecisionGaussian::new(weighted_gram(&self.x, z, None), &xt_vec(&self.x, &kappa, None))
    }

    /// Properness floor `(y_i - 1) + epsilon`.
    pub fn floor(&self, i: usize, epsilon: f64) -> f64 {
        self.y[i] - 1.0 + epsilon
    }
}

impl CdaModel for LogisticModel {
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

    fn check_calibration(&self, calib: &CalibrationParams) -> Result<()> {
        calib.validate(self.n())?;
        calib.check_floor(|i| self.floor(i, calib.epsilon))
    }

    fn calibrate(&self, state: &ChainState<Vec<f64>, ()>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        let eta = linear_predictor(&self.x, &state.theta);
        let (r, b) =
            (0..self.n()).map(|i| logistic_calibration(eta[i], prev.b[i], self.floor(i, prev.epsilon))).unzip();
        Ok(CalibrationParams { r, b, epsilon: prev.epsilon, frozen: false })
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
        for i in 0..self.n() {
            let (y, r, b) = (self.y[i], calib.r[i], calib.b[i]);
            let target = logistic_obs_loglik(y, eta_new[i], 1.0, 0.0) - logistic_obs_loglik(y, eta[i], 1.0, 0.0);
            let marginal = logistic_obs_loglik(y, eta_new[i], r, b) - logistic_obs_loglik(y, eta[i], r, b);
            acc.add(target - marginal);
        }
        Ok(vec![acc.value()])
    }
}
