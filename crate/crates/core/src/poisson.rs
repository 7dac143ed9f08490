//! Poisson log-normal regression:
//! `y_i ~ Poi(exp(x_i beta + tau_i))`, `tau_i ~ N(tau0, nu2)`,
//! `beta ~ N(0, sigma2_beta I)`, `tau0 ~ N(0, sigma2_tau)`, flat prior on `nu2`.
//!
//! The Poisson likelihood is the `lambda -> inf` limit of a negative
//! binomial, which admits Polya-Gamma augmentation. With `(r, b)` the
//! approximating likelihood is
//! `exp(psi_i)^y_i / (1 + exp(psi_i))^(r_i lambda)` with
//! `psi_i = eta_i - log(lambda) + b_i`; the accept step uses the exact
//! Poisson likelihood, so a finite `lambda` introduces no bias under MH.
//!
//! `theta = (tau_1..tau_n, beta_1..beta_p)` is drawn jointly. The precision
//! has a diagonal `tau` block, so the draw costs O(n p^2 + p^3).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::GlmDataset;
use crate::dist::{log1p_exp, log_expm1, sample_inverse_gamma, NeumaierSum, PolyaGammaSampler, RngStream};
use crate::linalg::{weighted_gram, xt_vec};
use crate::logistic::fisher_factor;
use crate::mh::{CalibrationParams, CdaModel, ChainState, Proposal};
use crate::{Error, Result};

/// Negative-binomial limit parameter used by default.
pub const DEFAULT_LAMBDA: f64 = 1e9;

/// `e^eta` beyond this is treated as overflow.
const MAX_ETA: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonHypers {
    pub tau0: f64,
    pub nu2: f64,
}

/// How `theta` is refreshed given the latents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scan {
    /// One joint Gaussian draw of `(tau, beta)`.
    #[default]
    Blocked,
    /// `tau | beta` then `beta | tau`. The resulting proposal has no
    /// tractable density, so it is only valid as a Gibbs sweep.
    Alternating,
}

/// Numerator of the Fisher-matching formula for `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RFormula {
    /// The Poisson information `e^eta`.
    #[default]
    Information,
    /// The information multiplied by `tau_i`, as one printed form reads.
    TauScaled,
}

#[derive(Clone, Debug)]
pub struct PoissonLogNormalModel {
    x: DMatrix<f64>,
    y: Vec<f64>,
    lambda: f64,
    log_lambda: f64,
    sigma2_beta: f64,
    sigma2_tau: f64,
    scan: Scan,
    r_formula: RFormula,
    fixed_hypers: Option<PoissonHypers>,
    recorded_tau: usize,
    pg: PolyaGammaSampler,
}

/// Fisher-matched `r` at `eta` with previous bias `b_prev`:
/// `r = e^eta * 2|psi| / (lambda tanh(|psi|/2))`, `psi = eta + b_prev - log(lambda)`.
pub fn poisson_r(eta: f64, b_prev: f64, lambda: f64) -> f64 {
    eta.exp() * fisher_factor(eta + b_prev - lambda.ln()) / lambda
}

/// Bias with `r lambda log(1 + e^(eta + b - log lambda)) = e^eta`:
/// `b = log(exp(exp(eta - log lambda - log r)) - 1) - eta + log lambda`.
pub fn poisson_b(eta: f64, r: f64, lambda: f64) -> f64 {
    let ll = lambda.ln();
    log_expm1((eta - ll - r.ln()).exp()) - eta + ll
}

/// Negative-binomial approximation to the Poisson log-likelihood of one
/// observation (dropping terms free of `eta`).
pub fn nb_obs_loglik(y: f64, eta: f64, lambda: f64, r: f64, b: f64) -> f64 {
    let psi = eta - lambda.ln() + b;
    let yterm = if y == 0.0 { 0.0 } else { y * psi };
    yterm - r * lambda * log1p_exp(psi)
}

/// Gaussian over `(tau, beta)` with precision
/// `[[D, Z X], [X'Z, X'ZX + I/sigma2_beta]]`, `D = Z + I/nu2`.
pub struct BlockedGaussian {
    d: Vec<f64>,
    z: Vec<f64>,
    h_tau: Vec<f64>,
    s: Option<Cholesky<f64, Dyn>>,
    beta_mean: DVector<f64>,
}

impl BlockedGaussian {
    fn new(x: &DMatrix<f64>, z: &[f64], h_tau: Vec<f64>, h_beta: &DVector<f64>, nu2: f64, sigma2_beta: f64) -> Result<Self> {
        let n = z.len();
        let p = x.ncols();
        let d: Vec<f64> = z.iter().map(|&zi| zi + 1.0 / nu2).collect();
        if p == 0 {
            return Ok(Self { d, z: z.to_vec(), h_tau, s: None, beta_mean: DVector::zeros(0) });
        }
        // Schur complement of the tau block: X' diag(z / (nu2 D)) X + I / sigma2_beta
        let w: Vec<f64> = (0..n).map(|i| z[i] / (nu2 * d[i])).collect();
        let mut s = weighted_gram(x, &w, None);
        for j in 0..p {
            s[(j, j)] += 1.0 / sigma2_beta;
        }
        let zh: Vec<f64> = (0..n).map(|i| z[i] * h_tau[i] / d[i]).collect();
        let rhs = h_beta - xt_vec(x, &zh, None);
        let chol = Cholesky::new(s).ok_or_else(|| Error::numerical("beta block (Schur complement) of the joint precision", p))?;
        let beta_mean = chol.solve(&rhs);
        Ok(Self { d, z: z.to_vec(), h_tau, s: Some(chol), beta_mean })
    }

    fn tau_given_beta_mean(&self, x: &DMatrix<f64>, beta: &DVector<f64>) -> Vec<f64> {
        let xb = x * beta;
        (0..self.d.len()).map(|i| (self.h_tau[i] - self.z[i] * xb[i]) / self.d[i]).collect()
    }

    /// Joint mean, `tau` first.
    pub fn mean(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let tau = self.tau_given_beta_mean(x, &self.beta_mean);
        DVector::from_iterator(tau.len() + self.beta_mean.len(), tau.into_iter().chain(self.beta_mean.iter().copied()))
    }

    /// Marginal variances, `tau` first.
    pub fn variances(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let n = self.d.len();
        match &self.s {
            None => self.d.iter().map(|d| 1.0 / d).collect(),
            Some(chol) => {
                let s_inv = chol.inverse();
                let mut out: Vec<f64> = (0..n)
                    .map(|i| {
                        let xi = x.row(i).transpose();
                        let q = (xi.transpose() * &s_inv * &xi)[(0, 0)];
                        1.0 / self.d[i] + (self.z[i] / self.d[i]).powi(2) * q
                    })
                    .collect();
                out.extend(s_inv.diagonal().iter());
                out
            }
        }
    }

    pub fn sample(&self, x: &DMatrix<f64>, rng: &mut RngStream) -> DVector<f64> {
        let p = self.beta_mean.len();
        let beta = match &self.s {
            None => DVector::zeros(0),
            Some(chol) => {
                let e = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                chol.l().tr_solve_lower_triangular(&e).expect("positive diagonal") + &self.beta_mean
            }
        };
        let tau_mean = self.tau_given_beta_mean(x, &beta);
        let n = tau_mean.len();
        let mut out = DVector::zeros(n + p);
        for i in 0..n {
            out[i] = tau_mean[i] + rng.sample::<f64, _>(StandardNormal) / self.d[i].sqrt();
        }
        for j in 0..p {
            out[n + j] = beta[j];
        }
        out
    }
}

impl PoissonLogNormalModel {
    pub fn new(data: &GlmDataset, lambda: f64) -> Result<Self> {
        let y = data.count_outcomes()?;
        if !(lambda >= 1e3 && lambda.is_finite()) {
            return Err(Error::param(format!("lambda must be at least 1e3, got {lambda}")));
        }
        if y.len() < 5 {
            return Err(Error::param("need at least 5 observations for the variance update"));
        }
        Ok(Self {
            x: data.x.clone(),
            recorded_tau: y.len(),
            y,
            lambda,
            log_lambda: lambda.ln(),
            sigma2_beta: 100.0,
            sigma2_tau: 100.0,
            scan: Scan::Blocked,
            r_formula: RFormula::Information,
            fixed_hypers: None,
            pg: PolyaGammaSampler::default(),
        })
    }

    pub fn with_scan(mut self, scan: Scan) -> Self {
        self.scan = scan;
        self
    }

    pub fn with_r_formula(mut self, f: RFormula) -> Self {
        self.r_formula = f;
        self
    }

    pub fn with_prior_variances(mut self, sigma2_beta: f64, sigma2_tau: f64) -> Result<Self> {
        if !(sigma2_beta > 0.0 && sigma2_tau > 0.0) {
            return Err(Error::param("prior variances must be positive"));
        }
        self.sigma2_beta = sigma2_beta;
        self.sigma2_tau = sigma2_tau;
        Ok(self)
    }

    /// Holds `(tau0, nu2)` fixed instead of updating them.
    pub fn with_fixed_hypers(mut self, h: PoissonHypers) -> Self {
        self.fixed_hypers = Some(h);
        self
    }

    /// Records only the first `k` random effects in traces.
    pub fn with_recorded_tau(mut self, k: usize) -> Self {
        self.recorded_tau = k.min(self.y.len());
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `x_i beta + tau_i` for `theta = (tau, beta)`.
    pub fn linear_predictor(&self, theta: &DVector<f64>) -> Vec<f64> {
        let n = self.n();
        let beta = theta.rows(n, self.p()).into_owned();
        let xb = &self.x * beta;
        (0..n).map(|i| xb[i] + theta[i]).collect()
    }

    pub fn floor(&self, i: usize, epsilon: f64) -> f64 {
        (self.y[i] - 1.0) / self.lambda + epsilon
    }

    fn log_prior(&self, theta: &DVector<f64>, h: &PoissonHypers) -> f64 {
        let n = self.n();
        let tau: f64 = (0..n).map(|i| (theta[i] - h.tau0).powi(2)).sum::<f64>() / (2.0 * h.nu2);
        let beta: f64 = theta.rows(n, self.p()).norm_squared() / (2.0 * self.sigma2_beta);
        -tau - beta - 0.5 * n as f64 * h.nu2.ln()
    }

    /// Exact Poisson log-likelihood (without `log y!`).
    pub fn exact_loglik(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.linear_predictor(theta);
        eta.iter().zip(&self.y).map(|(&e, &y)| y * e - e.exp()).collect::<NeumaierSum>().value()
    }

    /// Negative-binomial approximating log-likelihood under `(r, b)`.
    pub fn nb_loglik(&self, theta: &DVector<f64>, calib: &CalibrationParams) -> f64 {
        let eta = self.linear_predictor(theta);
        (0..self.n())
            .map(|i| nb_obs_loglik(self.y[i], eta[i], self.lambda, calib.r[i], calib.b[i]))
            .collect::<NeumaierSum>()
            .value()
    }

    /// Latent draws and the joint Gaussian of `(tau, beta)` given them.
    pub fn blocked_conditional(
        &self,
        theta: &DVector<f64>,
        h: &PoissonHypers,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<(Vec<f64>, BlockedGaussian)> {
        let eta = self.linear_predictor(theta);
        let z = (0..self.n())
            .map(|i| self.pg.sample(calib.r[i] * self.lambda, eta[i] - self.log_lambda + calib.b[i], rng))
            .collect::<Result<Vec<f64>>>()?;
        let g = self.conditional_given_latents(&z, h, calib)?;
        Ok((z, g))
    }

    /// Gaussian of `(tau, beta)` given latents `z`.
    pub fn conditional_given_latents(&self, z: &[f64], h: &PoissonHypers, calib: &CalibrationParams) -> Result<BlockedGaussian> {
        let kappa = self.kappa(z, calib);
        let h_tau: Vec<f64> = kappa.iter().map(|k| k + h.tau0 / h.nu2).collect();
        let h_beta = xt_vec(&self.x, &kappa, None);
        BlockedGaussian::new(&self.x, z, h_tau, &h_beta, h.nu2, self.sigma2_beta)
    }

    /// Linear term `y - r lambda / 2 + z (log lambda - b)`.
    fn kappa(&self, z: &[f64], calib: &CalibrationParams) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.y[i] - 0.5 * calib.r[i] * self.lambda + z[i] * (self.log_lambda - calib.b[i]))
            .collect()
    }

    fn alternating_sweep(
        &self,
        theta: &DVector<f64>,
        z: &[f64],
        h: &PoissonHypers,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<(DVector<f64>, Vec<f64>)> {
        let (n, p) = (self.n(), self.p());
        let kappa = self.kappa(z, calib);
        let beta = theta.rows(n, p).into_owned();
        let xb = &self.x * &beta;
        let mut out = theta.clone();
        let mut cond_var = vec![0.0; n + p];
        for i in 0..n {
            let d = z[i] + 1.0 / h.nu2;
            let m = (kappa[i] + h.tau0 / h.nu2 - z[i] * xb[i]) / d;
            out[i] = m + rng.sample::<f64, _>(StandardNormal) / d.sqrt();
            cond_var[i] = 1.0 / d;
        }
        if p > 0 {
            let mut prec = weighted_gram(&self.x, z, None);
            for j in 0..p {
                prec[(j, j)] += 1.0 / self.sigma2_beta;
            }
            let resid: Vec<f64> = (0..n).map(|i| kappa[i] - z[i] * out[i]).collect();
            let g = crate::dist::PrecisionGaussian::new(prec, &xt_vec(&self.x, &resid, None))?;
            let beta = g.sample(rng);
            let cov = g.covariance();
            for j in 0..p {
                out[n + j] = beta[j];
                cond_var[n + j] = cov[(j, j)];
            }
        }
        Ok((out, cond_var))
    }

    /// `(mean, var)` of `tau0 | tau, nu2`.
    pub fn tau0_conditional(&self, tau: &[f64], nu2: f64) -> (f64, f64) {
        let n = tau.len() as f64;
        let var = 1.0 / (n / nu2 + 1.0 / self.sigma2_tau);
        (var * tau.iter().sum::<f64>() / nu2, var)
    }

    /// Draws `tau0` then `nu2 ~ IG(n/2 - 1, max(SS/2, 1e-30))`.
    pub fn sample_hypers(&self, tau: &[f64], nu2: f64, rng: &mut RngStream) -> Result<PoissonHypers> {
        let (m, v) = self.tau0_conditional(tau, nu2);
        let tau0 = m + v.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let ss: f64 = tau.iter().map(|t| (t - tau0).powi(2)).sum();
        let nu2 = sample_inverse_gamma(tau.len() as f64 / 2.0 - 1.0, (0.5 * ss).max(1e-30), rng)?;
        Ok(PoissonHypers { tau0, nu2 })
    }

    /// One calibration update at linear predictor `eta`.
    pub fn calibration_at(&self, i: usize, eta: f64, tau: f64, b_prev: f64, epsilon: f64) -> (f64, f64) {
        let mut r = poisson_r(eta, b_prev, self.lambda);
        if self.r_formula == RFormula::TauScaled {
            r *= tau;
        }
        let r = r.max(self.floor(i, epsilon));
        (r, poisson_b(eta, r, self.lambda))
    }
}

impl CdaModel for PoissonLogNormalModel {
    type Latents = Vec<f64>;
    type Hypers = PoissonHypers;

    fn dim(&self) -> usize {
        self.n() + self.p()
    }

    fn calibration_len(&self) -> usize {
        self.n()
    }

    fn initial_state(&self) -> ChainState<Vec<f64>, PoissonHypers> {
        let n = self.n();
        let tau: Vec<f64> = self.y.iter().map(|y| (y + 0.5).ln()).collect();
        let hypers = self.fixed_hypers.unwrap_or_else(|| {
            let m = tau.iter().sum::<f64>() / n as f64;
            let v = tau.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            PoissonHypers { tau0: m, nu2: v.max(1e-2) }
        });
        let theta = DVector::from_iterator(n + self.p(), tau.into_iter().chain(std::iter::repeat_n(0.0, self.p())));
        ChainState { theta, latents: Vec::new(), hypers }
    }

    fn coord_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.p()).map(|j| format!("beta{j}")).collect();
        names.push("tau0".into());
        names.push("nu2".into());
        names.extend((0..self.recorded_tau).map(|i| format!("tau_{i}")));
        names
    }

    fn check_calibration(&self, calib: &CalibrationParams) -> Result<()> {
        calib.validate(self.n())?;
        calib.check_floor(|i| self.floor(i, calib.epsilon))
    }

    fn calibrate(&self, state: &ChainState<Vec<f64>, PoissonHypers>, prev: &CalibrationParams) -> Result<CalibrationParams> {
        let eta = self.linear_predictor(&state.theta);
        let (r, b) = (0..self.n())
            .map(|i| self.calibration_at(i, eta[i], state.theta[i], prev.b[i], prev.epsilon))
            .unzip();
        Ok(CalibrationParams { r, b, epsilon: prev.epsilon, frozen: false })
    }

    fn propose(
        &self,
        state: &mut ChainState<Vec<f64>, PoissonHypers>,
        calib: &CalibrationParams,
        rng: &mut RngStream,
    ) -> Result<Proposal> {
        match self.scan {
            Scan::Blocked => {
                let (z, g) = self.blocked_conditional(&state.theta, &state.hypers, calib, rng)?;
                state.latents = z;
                Ok(Proposal { theta: g.sample(&self.x, rng), cond_var: g.variances(&self.x) })
            }
            Scan::Alternating => {
                let eta = self.linear_predictor(&state.theta);
                let z = (0..self.n())
                    .map(|i| self.pg.sample(calib.r[i] * self.lambda, eta[i] - self.log_lambda + calib.b[i], rng))
                    .collect::<Result<Vec<f64>>>()?;
                let (theta, cond_var) = self.alternating_sweep(&state.theta, &z, &state.hypers, calib, rng)?;
                state.latents = z;
                Ok(Proposal { theta, cond_var })
            }
        }
    }

    fn log_target(&self, theta: &DVector<f64>, h: &PoissonHypers) -> f64 {
        if self.linear_predictor(theta).iter().any(|&e| e > MAX_ETA) {
            return f64::NAN;
        }
        self.exact_loglik(theta) + self.log_prior(theta, h)
    }

    fn log_proposal_marginal(&self, theta: &DVector<f64>, h: &PoissonHypers, calib: &CalibrationParams) -> f64 {
        self.nb_loglik(theta, calib) + self.log_prior(theta, h)
    }

    fn log_ratio(
        &self,
        state: &ChainState<Vec<f64>, PoissonHypers>,
        proposed: &DVector<f64>,
        calib: &CalibrationParams,
    ) -> Result<Vec<f64>> {
        if self.scan == Scan::Alternating {
            return Err(Error::param(
                "the alternating scan is a Gibbs sweep only; run it with the da or cda_nomh sampler",
            ));
        }
        let eta = self.linear_predictor(&state.theta);
        let eta_new = self.linear_predictor(proposed);
        if let Some(e) = eta.iter().chain(&eta_new).find(|&&e| e > MAX_ETA) {
            return Err(Error::invariant(format!("linear predictor {e} overflows exp")));
        }
        let mut acc = NeumaierSum::new();
        for i in 0..self.n() {
            let shape = calib.r[i] * self.lambda;
            let psi = eta[i] - self.log_lambda + calib.b[i];
            let psi_new = eta_new[i] - self.log_lambda + calib.b[i];
            // y terms and the Gaussian priors cancel
            acc.add(eta[i].exp() - eta_new[i].exp());
            acc.add(shape * (log1p_exp(psi_new) - log1p_exp(psi)));
        }
        Ok(vec![acc.value()])
    }

    fn update_hypers(&self, state: &mut ChainState<Vec<f64>, PoissonHypers>, rng: &mut RngStream) -> Result<()> {
        if self.fixed_hypers.is_none() {
            let n = self.n();
            state.hypers = self.sample_hypers(&state.theta.as_slice()[..n], state.hypers.nu2, rng)?;
        }
        Ok(())
    }

    fn record(
        &self,
        state: &ChainState<Vec<f64>, PoissonHypers>,
        cond_var: &[f64],
        values: &mut Vec<f64>,
        cond_vars: &mut Vec<f64>,
    ) {
        let n = self.n();
        values.extend(state.theta.rows(n, self.p()).iter());
        values.push(state.hypers.tau0);
        values.push(state.hypers.nu2);
        values.extend(state.theta.rows(0, self.recorded_tau).iter());
        cond_vars.extend_from_slice(&cond_var[n..]);
        cond_vars.extend([f64::NAN, f64::NAN]);
        cond_vars.extend_from_slice(&cond_var[..self.recorded_tau]);
    }
}
