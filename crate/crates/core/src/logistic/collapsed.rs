use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::logistic_calibration;
use crate::dist::{log1p_exp, PolyaGammaSampler, RngStream};
use crate::mh::{CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

/// Intercept-only logistic model summarised by `(n, s = sum y)`.
///
/// All observations share `(r, b)`, so the `n` latents collapse into one
/// `z ~ PG(n r, theta + b)` and each iteration costs O(1) regardless of `n`.
#[derive(Clone, Debug)]
pub struct CollapsedLogisticModel {
    n: f64,
    s: f64,
    pg: PolyaGammaSampler,
}

impl CollapsedLogisticModel {
    pub fn new(n: f64, s: f64) -> Result<Self> {
        if !(n >= 1.0 && n.is_finite() && n.fract() == 0.0) {
            return Err(Error::param(format!("n must be a positive integer, got {n}")));
        }
        if !(s > 0.0 && s < n && s.fract() == 0.0) {
            return Err(Error::param(format!("need 0 < s < n for a proper posterior, got s={s}, n={n}")));
        }
        Ok(Self { n, s, pg: PolyaGammaSampler::default() })
    }

    pub fn with_pg_sampler(mut self, pg: PolyaGammaSampler) -> Self {
        self.pg = pg;
        self
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// Properness floor `(s - 1) / n + epsilon`.
    pub fn floor(&self, epsilon: f64) -> f64 {
        (self.s - 1.0) / self.n + epsilon
    }

    /// `s (theta + b) - n r log(1 + exp(theta + b))`.
    pub fn loglik(&self, theta: f64, r: f64, b: f64) -> f64 {
        let psi = theta + b;
        self.s * psi - self.n * r * log1p_exp(psi)
    }

    /// Posterior mode `logit(s / n)` under the flat prior.
    pub fn mode(&self) -> f64 {
        (self.s / (self.n - self.s)).ln()
    }
}

impl CdaModel for CollapsedLogisticModel {
    type Latents = f64;
    type Hypers = ();

    fn dim(&self) -> usize {
        1
    }

    fn calibration_len(&self) -> usize {
        1
    }

    fn initial_state(&self) -> ChainState<f64, ()> {
        ChainState { theta: DVector::from_element(1, self.mode()), latents: 0.0, hypers: () }
    }

    fn coord_names(&self) -> Vec<String> {
        vec!["theta0".into()]
    }

    fn check_calibration(&self, calib: &CalibrationParams) -> Result<()> {
        calib.validate(1)?;
        calib.check_floor(|_| self.floor(calib.epsilon))
    }

    fn calibrate(&self, state: &ChainState<f64, ()>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        // the per-observation formula applies unchanged: both informations scale with n
        let (r, b) = logistic_calibration(state.theta[0], prev.b[0], self.floor(prev.epsilon));
        Ok(CalibrationParams { r: vec![r], b: vec![b], epsilon: prev.epsilon, frozen: false })
    }

    fn propose(&self, state: &mut ChainState<f64, ()>, calib: &CalibrationParams, rng: &mut RngStream) -> Result<Proposal> {
        let (r, b) = (calib.r[0], calib.b[0]);
        let z = self.pg.sample(self.n * r, state.theta[0] + b, rng)?;
        state.latents = z;
        let mean = (self.s - 0.5 * r * self.n - z * b) / z;
        let var = 1.0 / z;
        let eps: f64 = rng.sample(StandardNormal);
        Ok(Proposal { theta: DVector::from_element(1, mean + var.sqrt() * eps), cond_var: vec![var] })
    }

    fn log_target(&self, theta: &DVector<f64>, _: &()) -> f64 {
        self.loglik(theta[0], 1.0, 0.0)
    }

    fn log_proposal_marginal(&self, theta: &DVector<f64>, _: &(), calib: &CalibrationParams) -> f64 {
        self.loglik(theta[0], calib.r[0], calib.b[0])
    }

    fn log_ratio(&self, state: &ChainState<f64, ()>, proposed: &DVector<f64>, calib: &CalibrationParams) -> Result<Vec<f64>> {
        let (t0, t1) = (state.theta[0], proposed[0]);
        let (r, b) = (calib.r[0], calib.b[0]);
        // s terms cancel between target and marginal; keep only the normalisers
        let target = -self.n * (log1p_exp(t1) - log1p_exp(t0));
        let marginal = -self.n * r * (log1p_exp(t1 + b) - log1p_exp(t0 + b));
        Ok(vec![target - marginal])
    }
}
