use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{AdaptRow, CalibrationParams, PhaseTimings, Trace};
use crate::dist::RngStream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    /// Plain data augmentation: `(r, b) = (1, 0)`, every sweep accepted.
    Da,
    /// Calibrated proposal with the Metropolis-Hastings correction.
    Cda,
    /// Calibrated sweep accepted unconditionally. Its invariant measure is
    /// the calibrated posterior, not the target; exposed for diagnostics.
    CdaNoMh,
    /// Random-walk-free normal proposal centred at the current state with
    /// the inverse Fisher information as covariance (logistic only).
    MhMvn,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Da => "da",
            SamplerKind::Cda => "cda",
            SamplerKind::CdaNoMh => "cda_nomh",
            SamplerKind::MhMvn => "mh_mvn",
        }
    }

    fn corrects(self) -> bool {
        matches!(self, SamplerKind::Cda | SamplerKind::MhMvn)
    }

    fn adapts(self) -> bool {
        matches!(self, SamplerKind::Cda | SamplerKind::CdaNoMh)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "da" => Ok(SamplerKind::Da),
            "cda" => Ok(SamplerKind::Cda),
            "cda_nomh" | "cda_no_mh" => Ok(SamplerKind::CdaNoMh),
            "mh_mvn" | "mhmvn" => Ok(SamplerKind::MhMvn),
            other => Err(Error::param(format!("unknown sampler '{other}'"))),
        }
    }
}

/// Parameter value at which each adaptation step evaluates the calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AdaptPoint {
    /// The current draw `theta_t`.
    #[default]
    Current,
    /// The mean of the draws so far in the adaptation phase. Less sensitive
    /// to a single tail draw when the posterior is wide and skewed.
    RunningMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Total iterations, burn-in included.
    pub n_iter: usize,
    pub n_burn: usize,
    /// Iterations during which `(r, b)` adapt; frozen afterwards.
    pub n_adapt: usize,
    pub adapt_at: AdaptPoint,
    pub seed: u64,
    pub kind: SamplerKind,
    /// Keep every `thin`-th post-burn-in iteration.
    pub thin: usize,
    /// Slack added to properness floors on `r`.
    pub epsilon: f64,
    /// Negative-binomial limit parameter (Poisson model).
    pub lambda: Option<f64>,
    /// Fraction of zero outcomes kept per iteration (subsampled logistic).
    pub subsample_frac: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: 2000,
            n_burn: 200,
            n_adapt: 200,
            adapt_at: AdaptPoint::Current,
            seed: 1,
            kind: SamplerKind::Cda,
            thin: 1,
            epsilon: 1e-6,
            lambda: None,
            subsample_frac: None,
        }
    }
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, n_iter: usize, n_burn: usize, n_adapt: usize, seed: u64) -> Self {
        Self { kind, n_iter, n_burn, n_adapt, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_adapt <= self.n_burn && self.n_burn < self.n_iter) {
            return Err(Error::param(format!(
                "need n_adapt <= n_burn < n_iter, got {} / {} / {}",
                self.n_adapt, self.n_burn, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::param("thin must be at least 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState<L, H> {
    pub theta: DVector<f64>,
    pub latents: L,
    pub hypers: H,
}

/// Output of one augmentation sweep: the candidate parameter and the
/// conditional variance of each coordinate given the fresh latents.
#[derive(Clone, Debug)]
pub struct Proposal {
    pub theta: DVector<f64>,
    pub cond_var: Vec<f64>,
}

/// How the accept/reject decision partitions `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blocks {
    /// One decision for the whole vector.
    Joint,
    /// One decision per coordinate (conditionally independent units).
    PerCoordinate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub accept_fraction: f64,
    pub log_ratio: f64,
}

/// A model whose augmentation sweep under `(r, b)` serves as a proposal.
pub trait CdaModel: Sync {
    type Latents: Clone + Send;
    type Hypers: Clone + Send;

    /// Length of `theta`.
    fn dim(&self) -> usize;

    /// Length of the `r` and `b` vectors.
    fn calibration_len(&self) -> usize;

    fn blocks(&self) -> Blocks {
        Blocks::Joint
    }

    fn initial_state(&self) -> ChainState<Self::Latents, Self::Hypers>;

    fn coord_names(&self) -> Vec<String>;

    /// Validates lengths and the model's properness floors.
    fn check_calibration(&self, calib: &CalibrationParams) -> Result<()> {
        calib.validate(self.calibration_len())
    }

    /// Next `(r, b)` from the current state: `r` from Fisher matching using
    /// the previous `b`, then `b` from the new `r`, then floors.
    fn calibrate(
        &self,
        state: &ChainState<Self::Latents, Self::Hypers>,
        prev: &CalibrationParams,
    ) -> Result<CalibrationParams>;

    /// Refreshes `state.latents` and draws a candidate `theta`.
    fn propose(
        &self,
        state: &mut ChainState<Self::Latents, Self::Hypers>,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<Proposal>;

    /// Log likelihood plus log prior (of `theta` given the hyperparameters).
    fn log_target(&self, theta: &DVector<f64>, hypers: &Self::Hypers) -> f64;

    /// Same with the likelihood replaced by its calibrated counterpart.
    fn log_proposal_marginal(&self, theta: &DVector<f64>, hypers: &Self::Hypers, calib: &CalibrationParams) -> f64;

    /// Log acceptance ratio, one entry per block.
    fn log_ratio(
        &self,
        state: &ChainState<Self::Latents, Self::Hypers>,
        proposed: &DVector<f64>,
        calib: &CalibrationParams,
    ) -> Result<Vec<f64>> {
        let h = &state.hypers;
        let target = self.log_target(proposed, h) - self.log_target(&state.theta, h);
        let marginal =
            self.log_proposal_marginal(proposed, h, calib) - self.log_proposal_marginal(&state.theta, h, calib);
        Ok(vec![target - marginal])
    }

    /// Gibbs updates of hyperparameters given `theta`.
    fn update_hypers(&self, _state: &mut ChainState<Self::Latents, Self::Hypers>, _rng: &mut RngStream) -> Result<()> {
        Ok(())
    }

    /// Values written to the trace; defaults to `theta` and its conditional
    /// variances. Must match `coord_names` in length.
    fn record(
        &self,
        state: &ChainState<Self::Latents, Self::Hypers>,
        cond_var: &[f64],
        values: &mut Vec<f64>,
        cond_vars: &mut Vec<f64>,
    ) {
        values.extend(state.theta.iter());
        cond_vars.extend_from_slice(cond_var);
    }
}

/// Metropolis-Hastings decision for a log ratio. Draws a uniform only when
/// the outcome is uncertain, so a chain whose ratios are all zero consumes
/// exactly the random numbers of the uncorrected sweep.
pub fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> Result<bool> {
    if log_ratio.is_nan() || log_ratio == f64::INFINITY {
        return Err(Error::invariant(format!("acceptance log ratio is {log_ratio}")));
    }
    if log_ratio >= 0.0 {
        return Ok(true);
    }
    if log_ratio == f64::NEG_INFINITY {
        return Ok(false);
    }
    let u: f64 = rng.random();
    Ok(u.ln() < log_ratio)
}

/// Step-by-step driver for one chain.
pub struct ChainRunner<'m, M: CdaModel> {
    model: &'m M,
    config: SamplerConfig,
    calib: CalibrationParams,
    state: ChainState<M::Latents, M::Hypers>,
    rng: RngStream,
    iteration: usize,
    theta_sum: DVector<f64>,
}

impl<'m, M: CdaModel> ChainRunner<'m, M> {
    /// Starts from the model's initial state with `(r, b) = (1, 0)`.
    /// The calibration starts frozen for DA and MH-MVN, and whenever
    /// `n_adapt == 0`.
    pub fn new(model: &'m M, config: SamplerConfig, rng: RngStream) -> Result<Self> {
        config.validate()?;
        let mut calib = CalibrationParams::identity(model.calibration_len(), config.epsilon);
        if !config.kind.adapts() || config.n_adapt == 0 {
            calib.frozen = true;
        }
        model.check_calibration(&calib)?;
        let state = model.initial_state();
        let theta_sum = DVector::zeros(model.dim());
        let runner = Self { model, config, calib, state, rng, iteration: 0, theta_sum };
        runner.check_current()?;
        Ok(runner)
    }

    /// Replaces the starting calibration. It stays frozen when `n_adapt == 0`.
    pub fn with_calibration(mut self, mut calib: CalibrationParams) -> Result<Self> {
        if !self.config.kind.adapts() && !calib.is_identity() {
            return Err(Error::param(format!("sampler {} runs uncalibrated", self.config.kind)));
        }
        self.model.check_calibration(&calib)?;
        if self.config.n_adapt == 0 || !self.config.kind.adapts() {
            calib.frozen = true;
        }
        self.calib = calib;
        Ok(self)
    }

    pub fn with_state(mut self, state: ChainState<M::Latents, M::Hypers>) -> Result<Self> {
        if state.theta.len() != self.model.dim() {
            return Err(Error::param(format!(
                "initial theta has length {}, model expects {}",
                state.theta.len(),
                self.model.dim()
            )));
        }
        self.state = state;
        self.check_current()?;
        Ok(self)
    }

    pub fn state(&self) -> &ChainState<M::Latents, M::Hypers> {
        &self.state
    }

    pub fn calibration(&self) -> &CalibrationParams {
        &self.calib
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn check_current(&self) -> Result<()> {
        let lt = self.model.log_target(&self.state.theta, &self.state.hypers);
        if !lt.is_finite() {
            return Err(Error::invariant(format!("log target at the current state is {lt}")));
        }
        Ok(())
    }

    /// One full iteration: proposal, accept/reject and hyperparameter update
    /// under the current calibration, then the adaptation update. Returns the
    /// proposal's conditional variances.
    pub fn step(&mut self) -> Result<(StepOutcome, Vec<f64>)> {
        let it = self.iteration;
        let res = self.step_inner().map_err(|e| Error::AtIteration { iteration: it, source: Box::new(e) });
        self.iteration += 1;
        let res = res?;
        self.advance_calibration(it)?;
        Ok(res)
    }

    fn step_inner(&mut self) -> Result<(StepOutcome, Vec<f64>)> {
        let model = self.model;
        let proposal = model.propose(&mut self.state, &self.calib, &mut self.rng)?;
        let dim = model.dim();
        if proposal.theta.len() != dim {
            return Err(Error::invariant("proposal has the wrong dimension"));
        }
        let outcome = if self.config.kind.corrects() {
            let ratios = model.log_ratio(&self.state, &proposal.theta, &self.calib)?;
            match model.blocks() {
                Blocks::Joint => {
                    if ratios.len() != 1 {
                        return Err(Error::invariant("joint update needs one log ratio"));
                    }
                    let ok = accept(ratios[0], &mut self.rng)?;
                    if ok {
                        self.state.theta = proposal.theta;
                    }
                    StepOutcome { accept_fraction: if ok { 1.0 } else { 0.0 }, log_ratio: ratios[0] }
                }
                Blocks::PerCoordinate => {
                    if ratios.len() != dim {
                        return Err(Error::invariant("per-coordinate update needs one log ratio per coordinate"));
                    }
                    let mut n_acc = 0usize;
                    for (i, &l) in ratios.iter().enumerate() {
                        if accept(l, &mut self.rng)? {
                            self.state.theta[i] = proposal.theta[i];
                            n_acc += 1;
                        }
                    }
                    StepOutcome { accept_fraction: n_acc as f64 / dim as f64, log_ratio: ratios.iter().sum() }
                }
            }
        } else {
            self.state.theta = proposal.theta;
            StepOutcome { accept_fraction: 1.0, log_ratio: 0.0 }
        };
        model.update_hypers(&mut self.state, &mut self.rng)?;
        Ok((outcome, proposal.cond_var))
    }

    /// Advances the calibration after iteration `t` (zero-based): adapts
    /// from the current state while `t + 1 < n_adapt`, then freezes.
    fn advance_calibration(&mut self, t: usize) -> Result<()> {
        if self.calib.frozen {
            return Ok(());
        }
        if t + 1 < self.config.n_adapt {
            let next = match self.config.adapt_at {
                AdaptPoint::Current => self.model.calibrate(&self.state, &self.calib),
                AdaptPoint::RunningMean => {
                    self.theta_sum += &self.state.theta;
                    let mut at = self.state.clone();
                    at.theta = &self.theta_sum / (t + 1) as f64;
                    self.model.calibrate(&at, &self.calib)
                }
            }
                .map_err(|e| Error::AtIteration { iteration: t, source: Box::new(e) })?;
            self.model.check_calibration(&next)?;
            self.calib = next;
        } else {
            self.calib.frozen = true;
        }
        Ok(())
    }

    pub fn run(self) -> Result<Trace> {
        self.run_with_observer(|_, _| {})
    }

    /// Runs the configured iterations, calling `observer` with each
    /// recorded post-burn-in state.
    pub fn run_with_observer(
        mut self,
        mut observer: impl FnMut(usize, &ChainState<M::Latents, M::Hypers>),
    ) -> Result<Trace> {
        let cfg = self.config.clone();
        let names = self.model.coord_names();
        let width = names.len();
        let n_keep = (cfg.n_iter - cfg.n_burn).div_ceil(cfg.thin);
        let mut values = Vec::with_capacity(n_keep * width);
        let mut cond_vars = Vec::with_capacity(n_keep * width);
        let mut accepted = Vec::with_capacity(n_keep);
        let mut log_ratio = Vec::with_capacity(n_keep);
        let mut adaptation = Vec::with_capacity(cfg.n_burn);
        let mut timings = PhaseTimings::default();
        let (mut acc_adapt, mut acc_frozen) = (0.0, 0.0);

        for t in 0..cfg.n_iter {
            let start = Instant::now();
            let in_force = (self.calib.mean_log_r(), self.calib.mean_b());
            let (outcome, cv) = self.step()?;
            if t < cfg.n_adapt {
                acc_adapt += outcome.accept_fraction;
            } else {
                acc_frozen += outcome.accept_fraction;
            }
            if t < cfg.n_burn {
                adaptation.push(AdaptRow {
                    iter: t,
                    mean_log_r: in_force.0,
                    mean_b: in_force.1,
                    acceptance: outcome.accept_fraction,
                });
            } else if (t - cfg.n_burn).is_multiple_of(cfg.thin) {
                let before = values.len();
                self.model.record(&self.state, &cv, &mut values, &mut cond_vars);
                if values.len() - before != width || cond_vars.len() != values.len() {
                    return Err(Error::invariant("recorded row width differs from coord_names"));
                }
                accepted.push(outcome.accept_fraction);
                log_ratio.push(outcome.log_ratio);
                observer(t, &self.state);
            }
            let dt = start.elapsed();
            if t < cfg.n_adapt {
                timings.adapt += dt;
            } else if t < cfg.n_burn {
                timings.burn += dt;
            } else {
                timings.sample += dt;
            }
        }

        let rows = accepted.len();
        let frozen_iters = cfg.n_iter - cfg.n_adapt;
        Ok(Trace {
            coord_names: names,
            theta_samples: DMatrix::from_row_slice(rows, width, &values),
            cond_var: DMatrix::from_row_slice(rows, width, &cond_vars),
            accepted,
            log_ratio,
            adaptation,
            timings,
            accept_rate_adapt: (cfg.n_adapt > 0).then(|| acc_adapt / cfg.n_adapt as f64),
            accept_rate_frozen: (frozen_iters > 0).then(|| acc_frozen / frozen_iters as f64),
            final_calibration: self.calib,
        })
    }
}

/// Runs one chain from the model's initial state.
pub fn run_chain<M: CdaModel>(model: &M, config: &SamplerConfig, rng: RngStream) -> Result<Trace> {
    ChainRunner::new(model, config.clone(), rng)?.run()
}
