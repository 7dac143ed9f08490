//! Data generation, chain dispatch and per-chain summaries.

use std::fs::File;
use std::time::Duration;

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use cda_core::data::{
    generate_binary, generate_hier_binomial, generate_poisson, BinarySpec, GlmDataset, HierBinomialSpec, Link, Truth,
};
use cda_core::diagnostics::{acf, fmi_estimate, quantile, summarize, ChainSummary};
use cda_core::dist::{normal_quantile, RngStream};
use cda_core::hier_binomial::HierBinomialModel;
use cda_core::logistic::{CollapsedLogisticModel, LogisticModel, LogisticMvnModel, SubsampledLogisticModel};
use cda_core::mh::{AdaptRow, PhaseTimings, SamplerKind};
use cda_core::poisson::PoissonLogNormalModel;
use cda_core::probit::ProbitModel;
use cda_core::{CalibrationParams, CdaModel, ChainRunner, SamplerConfig, Trace};

use crate::config::{Epsilon, ExperimentConfig, ExperimentKind};
use crate::{Error, Result};

/// Streams reserved per (size, replicate) group: one for data, the rest
/// for chains.
const STREAMS_PER_GROUP: u64 = 64;

/// Summary of one chain.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub id: String,
    pub experiment: ExperimentKind,
    pub n: f64,
    pub replicate: usize,
    pub sampler: String,
    pub seed: u64,
    pub stream: u64,
    pub dataset_hash: String,
    pub sum_y: f64,
    pub summary: ChainSummary,
    pub accept_rate_adapt: Option<f64>,
    pub accept_rate_frozen: Option<f64>,
    pub final_mean_log_r: f64,
    pub final_mean_b: f64,
    /// Median over coordinates that have a conditional variance.
    pub fmi_median: Option<f64>,
    /// ACF per recorded coordinate (NaN where undefined).
    pub acf: Vec<(String, Vec<f64>)>,
    pub adaptation: Vec<AdaptRow>,
    pub timings: PhaseTimings,
    /// Probit only: `(eta_i, (eta_i + b_i) / sqrt(r_i))` at the last draw.
    pub transform: Option<Vec<(f64, f64)>>,
    pub transform_rmse: Option<f64>,
    /// Poisson only: RMSE of posterior-mean predictions on held-out rows.
    pub prediction_rmse: Option<f64>,
    /// Kept only when traces are written.
    pub trace: Option<Trace>,
}

impl RunRecord {
    pub fn ess_per_1000(&self) -> f64 {
        1000.0 * self.summary.ess_median / self.summary.n_draws as f64
    }

    /// Median over coordinates of the ACF at `lag`.
    pub fn acf_median(&self, lag: usize) -> f64 {
        let v: Vec<f64> = self.acf.iter().filter_map(|(_, a)| a.get(lag).copied()).collect();
        quantile(&v, 0.5)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub id: String,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
}

enum Dataset {
    Glm(GlmDataset),
    Collapsed { n: f64, s: f64 },
    Poisson { train: GlmDataset, test: GlmDataset },
}

impl Dataset {
    fn sum_y(&self) -> f64 {
        match self {
            Dataset::Glm(d) | Dataset::Poisson { train: d, .. } => d.sum_y(),
            Dataset::Collapsed { s, .. } => *s,
        }
    }

    fn n(&self) -> f64 {
        match self {
            Dataset::Glm(d) | Dataset::Poisson { train: d, .. } => d.n() as f64,
            Dataset::Collapsed { n, .. } => *n,
        }
    }

    /// SHA-256 over a canonical little-endian encoding.
    fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |d: &GlmDataset| {
            h.update((d.n() as u64).to_le_bytes());
            h.update((d.p() as u64).to_le_bytes());
            for i in 0..d.n() {
                for j in 0..d.p() {
                    h.update(d.x[(i, j)].to_le_bytes());
                }
            }
            for v in &d.y {
                h.update(v.to_le_bytes());
            }
            if let Some(t) = &d.trials {
                for v in t {
                    h.update(v.to_le_bytes());
                }
            }
        };
        match self {
            Dataset::Glm(d) => put(d),
            Dataset::Poisson { train, test } => {
                put(train);
                put(test);
            }
            Dataset::Collapsed { n, s } => {
                put(&GlmDataset::new(DMatrix::zeros(1, 0), vec![*s], None).expect("valid"));
                h.update(n.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// One sampler run within a group.
#[derive(Clone, Debug)]
struct Variant {
    label: String,
    kind: SamplerKind,
    fixed_r: Option<f64>,
    subsample: bool,
}

fn variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    let mut out = Vec::new();
    for &kind in &cfg.samplers {
        let base = Variant { label: kind.name().to_string(), kind, fixed_r: None, subsample: false };
        match cfg.experiment {
            ExperimentKind::ProbitIntercept if kind != SamplerKind::Da && !cfg.fixed_r.is_empty() => {
                for &r in &cfg.fixed_r {
                    out.push(Variant { label: format!("{}_r{r}", kind.name()), fixed_r: Some(r), ..base.clone() });
                }
            }
            ExperimentKind::LogisticSubsample => {
                out.push(base.clone());
                out.push(Variant { label: format!("{}_sub", kind.name()), subsample: true, ..base });
            }
            _ => out.push(base),
        }
    }
    out
}

fn format_n(n: f64) -> String {
    format!("{}", n as u64)
}

fn load_data(cfg: &ExperimentConfig) -> Result<Option<GlmDataset>> {
    match &cfg.data {
        None => Ok(None),
        Some(path) => {
            let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Ok(Some(GlmDataset::from_csv(f)?))
        }
    }
}

fn truth(cfg: &ExperimentConfig) -> Truth {
    match cfg.sum_y {
        Some(target) => Truth::TargetSumY { slopes: cfg.theta[1..].to_vec(), target },
        None => Truth::Theta(cfg.theta.clone()),
    }
}

fn split_rows(d: &GlmDataset, n_train: usize) -> Result<(GlmDataset, GlmDataset)> {
    let part = |rows: std::ops::Range<usize>| {
        let x = d.x.rows(rows.start, rows.len()).into_owned();
        let t = d.trials.as_ref().map(|t| t[rows.clone()].to_vec());
        GlmDataset::new(x, d.y[rows].to_vec(), t)
    };
    let n = d.n();
    let test = if n_train < n { part(n_train..n)? } else { GlmDataset::new(DMatrix::zeros(1, d.p()), vec![0.0], None)? };
    Ok((part(0..n_train)?, test))
}

fn make_dataset(cfg: &ExperimentConfig, n: f64, file: Option<&GlmDataset>, rng: &mut RngStream) -> Result<Dataset> {
    use ExperimentKind::*;
    let nn = n as usize;
    if let Some(d) = file {
        return Ok(match cfg.experiment {
            PoissonLognormal => {
                let n_train = ((d.n() as f64) / (1.0 + cfg.holdout)).round() as usize;
                let (train, test) = split_rows(d, n_train.max(1))?;
                Dataset::Poisson { train, test }
            }
            _ => Dataset::Glm(d.clone()),
        });
    }
    let binary = |link: Link, rng: &mut RngStream| -> Result<Dataset> {
        let spec = BinarySpec { link, n: nn, truth: truth(cfg), covariate_mean: cfg.covariate_mean };
        Ok(Dataset::Glm(generate_binary(&spec, rng)?.0))
    };
    Ok(match cfg.experiment {
        ProbitIntercept => Dataset::Glm(GlmDataset::intercept_only(nn, cfg.sum_y.unwrap_or(1.0) as usize)?),
        ProbitReg => binary(Link::Probit, rng)?,
        LogisticReg | LogisticSubsample => binary(Link::Logistic, rng)?,
        LogisticScaling => Dataset::Collapsed { n, s: cfg.sum_y.unwrap_or(1.0) },
        HierBinomial => {
            let spec = HierBinomialSpec {
                n: nn,
                median_trials: cfg.median_trials,
                log_sd_trials: cfg.log_sd_trials,
                theta0: cfg.theta0,
                sigma2: cfg.sigma2,
            };
            Dataset::Glm(generate_hier_binomial(&spec, rng)?.0)
        }
        PoissonLognormal => {
            let n_test = (n * cfg.holdout).round() as usize;
            let syn = generate_poisson(nn + n_test, &cfg.beta, cfg.tau0, cfg.nu2, rng)?;
            let (train, test) = split_rows(&syn.data, nn)?;
            Dataset::Poisson { train, test }
        }
    })
}

/// With a single observed outcome the flat-prior posterior of a binary
/// regression is improper and every sampler drifts off to infinity.
fn check_proper(cfg: &ExperimentConfig, data: &Dataset) -> Result<()> {
    use ExperimentKind::*;
    if let (ProbitIntercept | ProbitReg | LogisticReg | LogisticSubsample, Dataset::Glm(d)) = (cfg.experiment, data) {
        let s = d.sum_y();
        if s == 0.0 || s == d.n() as f64 {
            return Err(Error::Config(format!(
                "dataset has {s} successes out of {}; the posterior is improper (increase n or the intercept)",
                d.n()
            )));
        }
    }
    Ok(())
}

fn epsilon(cfg: &ExperimentConfig, n: f64, lambda: f64) -> f64 {
    match cfg.epsilon {
        Epsilon::Value(e) => e,
        Epsilon::Auto => match cfg.experiment {
            ExperimentKind::LogisticScaling => 1e-6 / n,
            ExperimentKind::PoissonLognormal => 1e-6 / lambda,
            _ => 1e-6,
        },
    }
}

struct ChainOutput {
    trace: Trace,
    transform: Option<Vec<(f64, f64)>>,
    prediction_rmse: Option<f64>,
}

fn run_model<M: CdaModel>(
    model: &M,
    sc: SamplerConfig,
    rng: RngStream,
    calib: Option<CalibrationParams>,
) -> cda_core::Result<Trace> {
    let mut runner = ChainRunner::new(model, sc, rng)?;
    if let Some(c) = calib {
        runner = runner.with_calibration(c)?;
    }
    runner.run()
}

fn probit_transform(model: &ProbitModel, trace: &Trace) -> Option<Vec<(f64, f64)>> {
    let last = trace.n_rows().checked_sub(1)?;
    let calib = &trace.final_calibration;
    if calib.is_identity() {
        return None;
    }
    let theta = trace.theta_samples.row(last).transpose();
    let eta = model.x() * theta;
    Some(eta.iter().enumerate().map(|(i, &e)| (e, (e + calib.b[i]) / calib.r[i].sqrt())).collect())
}

/// Posterior-mean prediction `E[exp(x beta + tau0 + nu2 / 2)]` on new units.
fn poisson_prediction_rmse(model: &PoissonLogNormalModel, trace: &Trace, test: &GlmDataset) -> Option<f64> {
    let p = model.p();
    let cols: Vec<Vec<f64>> = (0..p).map(|j| trace.column_by_name(&format!("beta{j}"))).collect::<Option<_>>()?;
    let tau0 = trace.column_by_name("tau0")?;
    let nu2 = trace.column_by_name("nu2")?;
    let draws = trace.n_rows();
    let mut sq = 0.0;
    for i in 0..test.n() {
        let mut pred = 0.0;
        for k in 0..draws {
            let xb: f64 = (0..p).map(|j| test.x[(i, j)] * cols[j][k]).sum();
            pred += (xb + tau0[k] + 0.5 * nu2[k]).exp();
        }
        sq += (pred / draws as f64 - test.y[i]).powi(2);
    }
    Some((sq / test.n() as f64).sqrt())
}

fn run_variant(cfg: &ExperimentConfig, data: &Dataset, v: &Variant, stream: u64) -> Result<ChainOutput> {
    use ExperimentKind::*;
    let n = data.n();
    let lambda = if v.kind == SamplerKind::Da { cfg.da_lambda } else { cfg.lambda };
    let mut sc = SamplerConfig::new(v.kind, cfg.iters, cfg.burn, if v.fixed_r.is_some() { 0 } else { cfg.adapt }, cfg.seed);
    sc.adapt_at = cfg.adapt_at;
    sc.thin = cfg.thin;
    sc.epsilon = epsilon(cfg, n, lambda);
    let rng = RngStream::new(cfg.seed, stream);
    let plain = |trace| ChainOutput { trace, transform: None, prediction_rmse: None };
    Ok(match (cfg.experiment, data) {
        (ProbitIntercept | ProbitReg, Dataset::Glm(d)) => {
            let model = ProbitModel::new(d)?;
            let calib = match v.fixed_r {
                Some(r) => {
                    let q = normal_quantile((d.sum_y() / d.n() as f64).clamp(1e-300, 1.0 - 1e-16))?;
                    Some(CalibrationParams::constant(d.n(), r, q * (r.sqrt() - 1.0), sc.epsilon))
                }
                None => None,
            };
            let trace = run_model(&model, sc, rng, calib)?;
            ChainOutput { transform: probit_transform(&model, &trace), trace, prediction_rmse: None }
        }
        (LogisticReg, Dataset::Glm(d)) if v.kind == SamplerKind::MhMvn => {
            plain(run_model(&LogisticMvnModel::new(d)?, sc, rng, None)?)
        }
        (LogisticReg, Dataset::Glm(d)) => plain(run_model(&LogisticModel::new(d)?, sc, rng, None)?),
        (LogisticSubsample, Dataset::Glm(d)) if v.subsample => {
            sc.subsample_frac = Some(cfg.subsample_frac);
            plain(run_model(&SubsampledLogisticModel::with_fraction(d, cfg.subsample_frac)?, sc, rng, None)?)
        }
        (LogisticSubsample, Dataset::Glm(d)) => plain(run_model(&LogisticModel::new(d)?, sc, rng, None)?),
        (LogisticScaling, &Dataset::Collapsed { n, s }) => plain(run_model(&CollapsedLogisticModel::new(n, s)?, sc, rng, None)?),
        (HierBinomial, Dataset::Glm(d)) => plain(run_model(&HierBinomialModel::new(d)?, sc, rng, None)?),
        (PoissonLognormal, Dataset::Poisson { train, test }) => {
            sc.lambda = Some(lambda);
            let model = PoissonLogNormalModel::new(train, lambda)?.with_recorded_tau(cfg.recorded_tau);
            let trace = run_model(&model, sc, rng, None)?;
            let prediction_rmse =
                if cfg.holdout > 0.0 { poisson_prediction_rmse(&model, &trace, test) } else { None };
            ChainOutput { trace, transform: None, prediction_rmse }
        }
        _ => return Err(Error::Config("dataset does not fit the experiment".into())),
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize_run(
    cfg: &ExperimentConfig,
    id: String,
    n: f64,
    replicate: usize,
    v: &Variant,
    stream: u64,
    hash: &str,
    sum_y: f64,
    out: ChainOutput,
) -> Result<RunRecord> {
    let trace = out.trace;
    let summary = summarize(&trace, None)?;
    let max_lag = cfg.max_lag.min(trace.n_rows().saturating_sub(1));
    let acf = trace
        .coord_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), acf(&trace.column(j), max_lag).unwrap_or_else(|_| vec![f64::NAN; max_lag + 1])))
        .collect();
    let fmi_median = fmi_estimate(&trace.theta_samples, &trace.cond_var).ok().and_then(|f| {
        let g: Vec<f64> = f.iter().map(|e| e.gamma).filter(|g| g.is_finite()).collect();
        (!g.is_empty()).then(|| quantile(&g, 0.5))
    });
    let transform_rmse = out.transform.as_ref().map(|pairs| {
        (pairs.iter().map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
    });
    Ok(RunRecord {
        id,
        experiment: cfg.experiment,
        n,
        replicate,
        sampler: v.label.clone(),
        seed: cfg.seed,
        stream,
        dataset_hash: hash.to_string(),
        sum_y,
        accept_rate_adapt: trace.accept_rate_adapt,
        accept_rate_frozen: trace.accept_rate_frozen,
        final_mean_log_r: trace.final_calibration.mean_log_r(),
        final_mean_b: trace.final_calibration.mean_b(),
        fmi_median,
        acf,
        adaptation: trace.adaptation.clone(),
        timings: trace.timings,
        transform: out.transform,
        transform_rmse,
        prediction_rmse: out.prediction_rmse,
        summary,
        trace: cfg.write_traces.then_some(trace),
    })
}

/// Runs every (size, replicate, sampler) combination. Individual chain
/// failures are collected rather than aborting the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let file = load_data(cfg)?;
    let sizes: Vec<f64> = match &file {
        Some(d) => vec![d.n() as f64],
        None => cfg.n.clone(),
    };
    let groups: Vec<(usize, f64, usize)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.replicates).map(move |r| (i * cfg.replicates + r, n, r)))
        .collect();
    let vars = variants(cfg);
    if vars.len() as u64 >= STREAMS_PER_GROUP {
        return Err(Error::Config(format!("at most {} sampler variants per run", STREAMS_PER_GROUP - 1)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let results: Vec<Vec<std::result::Result<RunRecord, Failure>>> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(g, n, rep)| {
                let base = g as u64 * STREAMS_PER_GROUP;
                let id_of = |v: &Variant| format!("{}_n{}_rep{rep}_{}", cfg.experiment, format_n(n), v.label);
                let data = match make_dataset(cfg, n, file.as_ref(), &mut RngStream::new(cfg.seed, base))
                    .and_then(|d| check_proper(cfg, &d).map(|_| d))
                {
                    Ok(d) => d,
                    Err(e) => {
                        return vars
                            .iter()
                            .map(|v| Err(Failure { id: id_of(v), message: format!("data generation: {e}") }))
                            .collect()
                    }
                };
                let hash = data.hash();
                vars.par_iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let stream = base + 1 + k as u64;
                        let id = id_of(v);
                        run_variant(cfg, &data, v, stream)
                            .and_then(|out| {
                                summarize_run(cfg, id.clone(), data.n(), rep, v, stream, &hash, data.sum_y(), out)
                            })
                            .map_err(|e| Failure { id, message: e.to_string() })
                    })
                    .collect()
            })
            .collect()
    });

    let mut output = ExperimentOutput::default();
    for r in results.into_iter().flatten() {
        match r {
            Ok(rec) => output.records.push(rec),
            Err(f) => output.failures.push(f),
        }
    }
    Ok(output)
}

/// Sampling-phase seconds per effective draw at the median ESS.
pub fn sec_per_ess(rec: &RunRecord) -> f64 {
    let secs: Duration = rec.timings.sample;
    if rec.summary.ess_median > 0.0 {
        secs.as_secs_f64() / rec.summary.ess_median
    } else {
        f64::INFINITY
    }
}

/// Per-coordinate posterior means, for quick comparisons across samplers.
pub fn coordinate_means(rec: &RunRecord) -> Vec<(String, f64)> {
    rec.summary.coords.iter().map(|c| (c.name.clone(), c.mean)).collect()
}
