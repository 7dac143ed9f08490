use nalgebra::{DMatrix, DVector};
use rand::seq::index;

use super::{logistic_calibration, logistic_obs_loglik, LogisticModel};
use crate::data::GlmDataset;
use crate::dist::{NeumaierSum, PolyaGammaSampler, PrecisionGaussian, RngStream};
use crate::linalg::{linear_predictor, weighted_gram, xt_vec};
use crate::mh::{CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

/// Index set used by one iteration and its latents.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubsampleLatents {
    /// Sorted indices `V = V1 u V0`.
    pub rows: Vec<usize>,
    /// `k_i` for each entry of `rows`.
    pub weights: Vec<f64>,
    pub z: Vec<f64>,
}

/// Logistic CDA that keeps every success and a fresh random subset `V0` of
/// the failures each iteration, up-weighting the failures by
/// `(n - |V1|) / |V0|`.
///
/// The accept step targets the weighted likelihood
/// `prod_{V1} p_i * (prod_{V0} (1 - p_i))^k` for the current `V`, so the
/// chain's invariant measure is a `V`-averaged approximation of the
/// posterior. When `V0` is the whole zero set no subset is drawn and the
/// chain coincides with [`LogisticModel`].
#[derive(Clone, Debug)]
pub struct SubsampledLogisticModel {
    full: LogisticModel,
    ones: Vec<usize>,
    zeros: Vec<usize>,
    m0: usize,
    pg: PolyaGammaSampler,
}

impl SubsampledLogisticModel {
    /// `zero_size` failures are kept per iteration.
    pub fn new(data: &GlmDataset, zero_size: usize) -> Result<Self> {
        let full = LogisticModel::new(data)?;
        let (ones, zeros): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| data.y[i] == 1.0);
        if zero_size == 0 || zero_size > zeros.len() {
            return Err(Error::param(format!("subsample size {zero_size} must lie in 1..={}", zeros.len())));
        }
        Ok(Self { full, ones, zeros, m0: zero_size, pg: PolyaGammaSampler::default() })
    }

    /// Keeps `round(frac * #zeros)` failures, at least one.
    pub fn with_fraction(data: &GlmDataset, frac: f64) -> Result<Self> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::param(format!("subsample fraction must lie in (0, 1], got {frac}")));
        }
        let zeros = data.y.iter().filter(|&&y| y == 0.0).count();
        Self::new(data, ((frac * zeros as f64).round() as usize).max(1))
    }

    pub fn with_initial_theta(mut self, theta: DVector<f64>) -> Result<Self> {
        self.full = self.full.with_initial_theta(theta)?;
        Ok(self)
    }

    pub fn zero_weight(&self) -> f64 {
        self.zeros.len() as f64 / self.m0 as f64
    }

    pub fn subsample_size(&self) -> usize {
        self.ones.len() + self.m0
    }

    fn x(&self) -> &DMatrix<f64> {
        self.full.x()
    }

    fn y(&self) -> &[f64] {
        self.full.y()
    }

    /// Draws `V` with its weights; no randomness is used when `V0` is the full zero set.
    pub fn draw_rows(&self, rng: &mut RngStream) -> (Vec<usize>, Vec<f64>) {
        let mut rows: Vec<usize> = if self.m0 == self.zeros.len() {
            (0..self.y().len()).collect()
        } else {
            let mut v = self.ones.clone();
            v.extend(index::sample(rng, self.zeros.len(), self.m0).into_iter().map(|j| self.zeros[j]));
            v
        };
        rows.sort_unstable();
        let k0 = self.zero_weight();
        let weights = rows.iter().map(|&i| if self.y()[i] == 1.0 { 1.0 } else { k0 }).collect();
        (rows, weights)
    }

    /// Weighted log-likelihood over `rows` under `(r, b)`.
    pub fn weighted_loglik(&self, theta: &DVector<f64>, rows: &[usize], weights: &[f64], calib: &CalibrationParams) -> f64 {
        let x = self.x();
        rows.iter()
            .zip(weights)
            .map(|(&i, &k)| {
                let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * theta[j]).sum();
                let y = self.y()[i];
                k * logistic_obs_loglik(y, eta, calib.r[i], calib.b[i])
            })
            .collect::<NeumaierSum>()
            .value()
    }

    /// Floor `(y_i - 1) / k_i + epsilon`.
    fn floor(&self, i: usize, epsilon: f64) -> f64 {
        let k = if self.y()[i] == 1.0 { 1.0 } else { self.zero_weight() };
        (self.y()[i] - 1.0) / k + epsilon
    }
}

impl CdaModel for SubsampledLogisticModel {
    type Latents = SubsampleLatents;
    type Hypers = ();

    fn dim(&self) -> usize {
        self.full.dim()
    }

    fn calibration_len(&self) -> usize {
        self.y().len()
    }

    fn initial_state(&self) -> ChainState<SubsampleLatents, ()> {
        let s = self.full.initial_state();
        ChainState { theta: s.theta, latents: SubsampleLatents::default(), hypers: () }
    }

    fn coord_names(&self) -> Vec<String> {
        self.full.coord_names()
    }

    fn check_calibration(&self, calib: &CalibrationParams) -> Result<()> {
        calib.validate(self.y().len())?;
        calib.check_floor(|i| self.floor(i, calib.epsilon))
    }

    fn calibrate(&self, state: &ChainState<SubsampleLatents, ()>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        let eta = linear_predictor(self.x(), &state.theta);
        let (r, b) =
            (0..eta.len()).map(|i| logistic_calibration(eta[i], prev.b[i], self.floor(i, prev.epsilon))).unzip();
        Ok(CalibrationParams { r, b, epsilon: prev.epsilon, frozen: false })
    }

    fn propose(
        &self,
        state: &mut ChainState<SubsampleLatents, ()>,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<Proposal> {
        let (rows, weights) = self.draw_rows(rng);
        let x = self.x();
        let mut z = Vec::with_capacity(rows.len());
        let mut kappa = Vec::with_capacity(rows.len());
        for (&i, &k) in rows.iter().zip(&weights) {
            let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * state.theta[j]).sum();
            let zi = self.pg.sample(k * calib.r[i], eta + calib.b[i], rng)?;
            kappa.push(self.y()[i] - 0.5 * k * calib.r[i] - zi * calib.b[i]);
            z.push(zi);
        }
        let g = PrecisionGaussian::new(weighted_gram(x, &z, Some(&rows)), &xt_vec(x, &kappa, Some(&rows)))?;
        let cond_var = g.covariance().diagonal().iter().copied().collect();
        state.latents = SubsampleLatents { rows, weights, z };
        Ok(Proposal { theta: g.sample(rng), cond_var })
    }

    /// Full-data log-likelihood (used only to validate starting states).
    fn log_target(&self, theta: &DVector<f64>, _: &()) -> f64 {
        self.full.exact_loglik(theta)
    }

    fn log_proposal_marginal(&self, theta: &DVector<f64>, _: &(), calib: &CalibrationParams) -> f64 {
        self.full.loglik(theta, calib)
    }

    fn log_ratio(
        &self,
        state: &ChainState<SubsampleLatents, ()>,
        proposed: &DVector<f64>,
        calib: &CalibrationParams,
    ) -> Result<Vec<f64>> {
        let SubsampleLatents { rows, weights, .. } = &state.latents;
        let x = self.x();
        let mut acc = NeumaierSum::new();
        for (&i, &k) in rows.iter().zip(weights) {
            let eta: f64 = (0..x.ncols()).map(|j| x[(i, j)] * state.theta[j]).sum();
            let eta_new: f64 = (0..x.ncols()).map(|j| x[(i, j)] * proposed[j]).sum();
            let (y, r, b) = (self.y()[i], calib.r[i], calib.b[i]);
            let target = logistic_obs_loglik(y, eta_new, 1.0, 0.0) - logistic_obs_loglik(y, eta, 1.0, 0.0);
            let marginal = logistic_obs_loglik(y, eta_new, r, b) - logistic_obs_loglik(y, eta, r, b);
            acc.add(k * (target - marginal));
        }
        Ok(vec![acc.value()])
    }
}
