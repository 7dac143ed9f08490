//! Experiment configuration. Values come from the experiment's built-in
//! defaults, then an optional `key = value` file, then command-line
//! overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cda_core::mh::{AdaptPoint, SamplerKind};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    ProbitIntercept,
    ProbitReg,
    LogisticReg,
    LogisticScaling,
    LogisticSubsample,
    HierBinomial,
    PoissonLognormal,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ProbitIntercept,
        ExperimentKind::ProbitReg,
        ExperimentKind::LogisticReg,
        ExperimentKind::LogisticScaling,
        ExperimentKind::LogisticSubsample,
        ExperimentKind::HierBinomial,
        ExperimentKind::PoissonLognormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ProbitIntercept => "probit-intercept",
            ExperimentKind::ProbitReg => "probit-reg",
            ExperimentKind::LogisticReg => "logistic-reg",
            ExperimentKind::LogisticScaling => "logistic-scaling",
            ExperimentKind::LogisticSubsample => "logistic-subsample",
            ExperimentKind::HierBinomial => "hier-binomial",
            ExperimentKind::PoissonLognormal => "poisson-lognormal",
        }
    }

    /// Samplers the experiment can run.
    pub fn supported_samplers(self) -> &'static [SamplerKind] {
        use SamplerKind::*;
        match self {
            ExperimentKind::LogisticReg => &[Da, Cda, CdaNoMh, MhMvn],
            _ => &[Da, Cda, CdaNoMh],
        }
    }

    /// Whether a `--data` file can replace the synthetic generator.
    pub fn accepts_data_file(self) -> bool {
        !matches!(self, ExperimentKind::LogisticScaling)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s.replace('_', "-"))
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Slack added to properness floors on `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epsilon {
    /// `1e-6 / n` for the collapsed scaling run, `1e-6 / lambda` for the
    /// Poisson model, `1e-6` otherwise.
    Auto,
    Value(f64),
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::Auto => f.write_str("auto"),
            Epsilon::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Recognised keys with a one-line description, echoed into the manifest.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "experiment id; must match the subcommand when given in a file"),
    ("n", "comma-separated sample sizes (units for hier-binomial); logistic-scaling accepts up to 1e15"),
    ("iters", "total iterations per chain, burn-in included"),
    ("burn", "burn-in iterations (adaptation happens inside burn-in)"),
    ("adapt", "iterations during which (r, b) adapt; frozen afterwards"),
    ("adapt_at", "point at which (r, b) are evaluated while adapting: current | running-mean"),
    ("thin", "keep every thin-th post-burn-in draw"),
    ("seed", "base seed; data and chains use separate streams derived from it"),
    ("sampler", "comma-separated samplers: da, cda, cda_nomh, mh_mvn (logistic-reg only)"),
    ("replicates", "independent datasets (and chains) per sample size"),
    ("out", "output directory"),
    ("epsilon", "slack on the properness floor of r: a number or auto"),
    ("lambda", "negative-binomial limit parameter for the calibrated Poisson samplers"),
    ("da_lambda", "negative-binomial limit parameter for the uncalibrated Poisson sampler"),
    ("subsample_frac", "fraction of zero outcomes kept per iteration (logistic-subsample)"),
    ("data", "optional CSV input with header y,N,x1..xp; replaces the synthetic data"),
    ("write_traces", "write trace_<id>.csv files (true | false)"),
    ("threads", "worker threads; 0 uses the available parallelism"),
    ("max_lag", "largest ACF lag reported"),
    ("theta", "true coefficients, intercept first (probit-reg, logistic-reg, logistic-subsample)"),
    ("sum_y", "intercept experiments: exact number of successes; regressions: target E[sum y] (solves the intercept)"),
    ("covariate_mean", "covariates are drawn iid N(covariate_mean, 1)"),
    ("fixed_r", "probit-intercept: comma-separated fixed r values, b = Phi^-1(sum_y / n) (sqrt(r) - 1); empty adapts"),
    ("beta", "poisson-lognormal: true fixed effects (no intercept column)"),
    ("tau0", "poisson-lognormal: mean of the random effects"),
    ("nu2", "poisson-lognormal: variance of the random effects"),
    ("holdout", "poisson-lognormal: extra held-out rows as a fraction of n, for prediction RMSE"),
    ("recorded_tau", "poisson-lognormal: number of random effects written to traces"),
    ("theta0", "hier-binomial: mean of the unit logits"),
    ("sigma2", "hier-binomial: variance of the unit logits"),
    ("median_trials", "hier-binomial: median trial count"),
    ("log_sd_trials", "hier-binomial: log-scale sd of trial counts"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: Vec<f64>,
    pub iters: usize,
    pub burn: usize,
    pub adapt: usize,
    pub adapt_at: AdaptPoint,
    pub thin: usize,
    pub seed: u64,
    pub samplers: Vec<SamplerKind>,
    pub replicates: usize,
    pub out: PathBuf,
    pub epsilon: Epsilon,
    pub lambda: f64,
    pub da_lambda: f64,
    pub subsample_frac: f64,
    pub data: Option<PathBuf>,
    pub write_traces: bool,
    pub threads: usize,
    pub max_lag: usize,
    pub theta: Vec<f64>,
    pub sum_y: Option<f64>,
    pub covariate_mean: f64,
    pub fixed_r: Vec<f64>,
    pub beta: Vec<f64>,
    pub tau0: f64,
    pub nu2: f64,
    pub holdout: f64,
    pub recorded_tau: usize,
    pub theta0: f64,
    pub sigma2: f64,
    pub median_trials: f64,
    pub log_sd_trials: f64,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `experiment`.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        use SamplerKind::*;
        let mut c = Self {
            experiment,
            n: vec![1e4],
            iters: 10_000,
            burn: 1000,
            adapt: 500,
            adapt_at: AdaptPoint::Current,
            thin: 1,
            seed: 1,
            samplers: vec![Da, Cda],
            replicates: 1,
            out: PathBuf::from(format!("out/{}", experiment.name())),
            epsilon: Epsilon::Auto,
            lambda: 1e9,
            da_lambda: 1e3,
            subsample_frac: 0.01,
            data: None,
            write_traces: false,
            threads: 0,
            max_lag: 100,
            theta: Vec::new(),
            sum_y: None,
            covariate_mean: 1.0,
            fixed_r: Vec::new(),
            beta: vec![0.5, -0.5],
            tau0: 2.0,
            nu2: 1.0,
            holdout: 0.2,
            recorded_tau: 10,
            theta0: -12.0,
            sigma2: 7.7,
            median_trials: 5000.0,
            log_sd_trials: 1.5,
        };
        match experiment {
            ExperimentKind::ProbitIntercept => {
                c.sum_y = Some(1.0);
                c.samplers = vec![Da, Cda, CdaNoMh];
            }
            ExperimentKind::ProbitReg => {
                c.theta = vec![-5.0, 1.0, -1.0];
            }
            ExperimentKind::LogisticReg | ExperimentKind::LogisticSubsample => {
                c.n = vec![1e5];
                c.theta = vec![-9.0, 1.0];
                c.iters = 2000;
                c.burn = 500;
                c.adapt = 200;
                c.adapt_at = AdaptPoint::RunningMean;
            }
            ExperimentKind::LogisticScaling => {
                c.n = vec![1e2, 1e4, 1e6, 1e8, 1e10];
                c.sum_y = Some(1.0);
                c.iters = 3000;
                c.burn = 1000;
                c.adapt = 500;
                c.adapt_at = AdaptPoint::RunningMean;
                c.replicates = 20;
            }
            ExperimentKind::HierBinomial => {
                c.n = vec![2000.0];
                c.iters = 2000;
                c.burn = 500;
                c.adapt = 200;
            }
            ExperimentKind::PoissonLognormal => {
                c.n = vec![200.0];
                c.iters = 20_000;
                c.burn = 1000;
                c.adapt = 2;
                c.adapt_at = AdaptPoint::RunningMean;
            }
        }
        c
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got '{v}'"));
        match key.trim() {
            "experiment" => {
                let e: ExperimentKind = v.parse()?;
                if e != self.experiment {
                    return Err(Error::Config(format!("file is for '{e}' but the command runs '{}'", self.experiment)));
                }
            }
            "n" => self.n = parse_list(v).map_err(|_| bad("a comma-separated list of sizes"))?,
            "iters" => self.iters = parse_count(v).ok_or_else(|| bad("a count"))?,
            "burn" => self.burn = parse_count(v).ok_or_else(|| bad("a count"))?,
            "adapt" => self.adapt = parse_count(v).ok_or_else(|| bad("a count"))?,
            "thin" => self.thin = parse_count(v).ok_or_else(|| bad("a count"))?,
            "replicates" => self.replicates = parse_count(v).ok_or_else(|| bad("a count"))?,
            "threads" => self.threads = parse_count(v).ok_or_else(|| bad("a count"))?,
            "max_lag" => self.max_lag = parse_count(v).ok_or_else(|| bad("a count"))?,
            "recorded_tau" => self.recorded_tau = parse_count(v).ok_or_else(|| bad("a count"))?,
            "seed" => self.seed = v.parse().map_err(|_| bad("an unsigned integer"))?,
            "adapt_at" => {
                self.adapt_at = match v {
                    "current" => AdaptPoint::Current,
                    "running-mean" | "running_mean" => AdaptPoint::RunningMean,
                    _ => return Err(bad("current or running-mean")),
                }
            }
            "sampler" => {
                self.samplers =
                    v.split(',').map(|s| s.trim().parse::<SamplerKind>()).collect::<cda_core::Result<_>>()?;
            }
            "out" => self.out = PathBuf::from(v),
            "epsilon" => {
                self.epsilon = if v == "auto" { Epsilon::Auto } else { Epsilon::Value(v.parse().map_err(|_| bad("a number or auto"))?) }
            }
            "lambda" => self.lambda = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "da_lambda" => self.da_lambda = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "subsample_frac" => self.subsample_frac = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "data" => self.data = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "write_traces" => self.write_traces = v.parse().map_err(|_| bad("true or false"))?,
            "theta" => self.theta = parse_list(v).map_err(|_| bad("a comma-separated list"))?,
            "sum_y" => self.sum_y = if v.is_empty() { None } else { Some(parse_f64(v).ok_or_else(|| bad("a number"))?) },
            "covariate_mean" => self.covariate_mean = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "fixed_r" => self.fixed_r = parse_list(v).map_err(|_| bad("a comma-separated list"))?,
            "beta" => self.beta = parse_list(v).map_err(|_| bad("a comma-separated list"))?,
            "tau0" => self.tau0 = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "nu2" => self.nu2 = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "holdout" => self.holdout = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "theta0" => self.theta0 = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "sigma2" => self.sigma2 = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "median_trials" => self.median_trials = parse_f64(v).ok_or_else(|| bad("a number"))?,
            "log_sd_trials" => self.log_sd_trials = parse_f64(v).ok_or_else(|| bad("a number"))?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n.is_empty() {
            return fail("n is empty".into());
        }
        let max_n = if self.experiment == ExperimentKind::LogisticScaling { 1e15 } else { 1e7 };
        if let Some(n) = self.n.iter().find(|&&n| !(n >= 1.0 && n <= max_n && n.fract() == 0.0)) {
            return fail(format!("n = {n} must be an integer in [1, {max_n:e}]"));
        }
        if !(self.adapt <= self.burn && self.burn < self.iters) {
            return fail(format!("need adapt <= burn < iters, got {} / {} / {}", self.adapt, self.burn, self.iters));
        }
        if self.thin == 0 || self.replicates == 0 {
            return fail("thin and replicates must be at least 1".into());
        }
        if self.samplers.is_empty() {
            return fail("no samplers selected".into());
        }
        let supported = self.experiment.supported_samplers();
        if let Some(s) = self.samplers.iter().find(|s| !supported.contains(s)) {
            return fail(format!("sampler {s} is not available for {}", self.experiment));
        }
        if let Epsilon::Value(e) = self.epsilon {
            if e.is_nan() || e <= 0.0 {
                return fail(format!("epsilon must be positive, got {e}"));
            }
        }
        if !(self.lambda >= 1e3 && self.da_lambda >= 1e3) {
            return fail("lambda and da_lambda must be at least 1e3".into());
        }
        if !(self.subsample_frac > 0.0 && self.subsample_frac <= 1.0) {
            return fail(format!("subsample_frac must be in (0, 1], got {}", self.subsample_frac));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return fail(format!("holdout must be in [0, 1), got {}", self.holdout));
        }
        if self.fixed_r.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return fail("fixed_r values must be positive".into());
        }
        if self.data.is_some() && !self.experiment.accepts_data_file() {
            return fail(format!("{} does not take a data file", self.experiment));
        }
        match self.experiment {
            ExperimentKind::ProbitReg | ExperimentKind::LogisticReg | ExperimentKind::LogisticSubsample
                if self.data.is_none() && self.theta.is_empty() =>
            {
                fail("theta is required for synthetic regression data".into())
            }
            ExperimentKind::ProbitIntercept | ExperimentKind::LogisticScaling => match self.sum_y {
                Some(s) if s >= 1.0 && s.fract() == 0.0 && self.n.iter().all(|&n| s < n) => Ok(()),
                _ if self.data.is_some() => Ok(()),
                _ => fail("sum_y must be an integer in [1, n)".into()),
            },
            _ => Ok(()),
        }
    }

    /// The effective configuration as strings, for the manifest.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let adapt_at = match self.adapt_at {
            AdaptPoint::Current => "current",
            AdaptPoint::RunningMean => "running-mean",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("n", list(&self.n)),
            ("iters", self.iters.to_string()),
            ("burn", self.burn.to_string()),
            ("adapt", self.adapt.to_string()),
            ("adapt_at", adapt_at.to_string()),
            ("thin", self.thin.to_string()),
            ("seed", self.seed.to_string()),
            ("sampler", self.samplers.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")),
            ("replicates", self.replicates.to_string()),
            ("out", self.out.display().to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("lambda", self.lambda.to_string()),
            ("da_lambda", self.da_lambda.to_string()),
            ("subsample_frac", self.subsample_frac.to_string()),
            ("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("write_traces", self.write_traces.to_string()),
            ("threads", self.threads.to_string()),
            ("max_lag", self.max_lag.to_string()),
            ("theta", list(&self.theta)),
            ("sum_y", self.sum_y.map(|s| s.to_string()).unwrap_or_default()),
            ("covariate_mean", self.covariate_mean.to_string()),
            ("fixed_r", list(&self.fixed_r)),
            ("beta", list(&self.beta)),
            ("tau0", self.tau0.to_string()),
            ("nu2", self.nu2.to_string()),
            ("holdout", self.holdout.to_string()),
            ("recorded_tau", self.recorded_tau.to_string()),
            ("theta0", self.theta0.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("median_trials", self.median_trials.to_string()),
            ("log_sd_trials", self.log_sd_trials.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

fn parse_f64(v: &str) -> Option<f64> {
    v.trim().parse().ok().filter(|x: &f64| !x.is_nan())
}

/// Counts may be written as `10000` or `1e4`.
fn parse_count(v: &str) -> Option<usize> {
    let x = parse_f64(v)?;
    (x >= 0.0 && x.fract() == 0.0 && x < 1e15).then_some(x as usize)
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, ()> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(s).ok_or(())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::LogisticScaling);
        c.apply_file("# scaling grid\nn = 1e2, 1e4\nreplicates=3 # fewer\n\nadapt_at = current\n").unwrap();
        c.set("iters", "2e3").unwrap();
        assert_eq!(c.n, vec![100.0, 10_000.0]);
        assert_eq!(c.replicates, 3);
        assert_eq!(c.iters, 2000);
        assert_eq!(c.adapt_at, AdaptPoint::Current);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::ProbitReg);
        assert!(c.apply_file("n 100").is_err());
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("iters", "1.5").is_err());
        assert!(c.set("experiment", "hier-binomial").is_err());
        c.set("sampler", "mh_mvn").unwrap();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults(ExperimentKind::ProbitIntercept);
        c.set("n", "0").unwrap();
        assert!(c.validate().is_err());
        c.set("n", "1e8").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_key_round_trips() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::defaults(kind);
            c.validate().unwrap();
            let entries = c.entries();
            assert_eq!(entries.len(), KEYS.len());
            let mut d = ExperimentConfig::defaults(kind);
            for (k, v) in &entries {
                assert!(KEYS.iter().any(|(name, _)| name == k), "undocumented key {k}");
                d.set(k, v).unwrap();
            }
            assert_eq!(c, d);
        }
    }
}
