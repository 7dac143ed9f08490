//! Chain diagnostics: autocorrelation, effective sample size, fraction of
//! missing information and posterior summaries.

use std::time::Duration;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::mh::Trace;
use crate::{Error, Result};

/// Default number of lags reported by summaries.
pub const DEFAULT_MAX_LAG: usize = 100;

/// Minimum series length accepted by [`ess`].
pub const MIN_ESS_LEN: usize = 100;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample autocorrelations at lags `0..=max_lag`, with the biased
/// (divide-by-`N`) autocovariance estimator.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag >= n {
        return Err(Error::param(format!("max_lag {max_lag} must be below the series length {n}")));
    }
    let m = mean(series);
    let d: Vec<f64> = series.iter().map(|v| v - m).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum::<f64>();
    if !(c0 > 0.0) {
        return Err(Error::param("autocorrelation of a constant series is undefined"));
    }
    Ok((0..=max_lag)
        .map(|k| if k == 0 { 1.0 } else { d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0 })
        .collect())
}

/// Biased autocovariances at every lag, via zero-padded FFT.
pub fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let m = mean(series);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> =
        series.iter().map(|v| Complex::new(v - m, 0.0)).chain(std::iter::repeat(Complex::new(0.0, 0.0))).take(len).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / (len as f64 * n as f64);
    buf[..n].iter().map(|c| c.re * scale).collect()
}

/// Effective sample size `N / (1 + 2 sum rho_k)`, truncating the sum with
/// Geyer's initial positive sequence, clipped to `[1, N]`.
pub fn ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_ESS_LEN {
        return Err(Error::param(format!("ESS needs at least {MIN_ESS_LEN} draws, got {n}")));
    }
    let gamma = autocovariance(series);
    if !(gamma[0] > 0.0) {
        return Err(Error::param("ESS of a constant series is undefined"));
    }
    let rho = |k: usize| if k < n { gamma[k] / gamma[0] } else { 0.0 };
    // tau = -1 + 2 sum_m (rho_{2m} + rho_{2m+1}) over the initial positive pairs
    let mut pair_sum = 0.0;
    let mut m = 0;
    while 2 * m < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * pair_sum;
    Ok((n as f64 / tau).clamp(1.0, n as f64))
}

/// Estimated fraction of missing information for one coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FmiEstimate {
    /// `1 - mean(cond_var) / var(theta)` clipped to `[0, 1]`.
    pub gamma: f64,
    pub raw: f64,
}

/// Per-column `1 - mean(cond_var[:, j]) / var(theta[:, j])`.
pub fn fmi_estimate(theta_samples: &DMatrix<f64>, cond_var: &DMatrix<f64>) -> Result<Vec<FmiEstimate>> {
    if theta_samples.shape() != cond_var.shape() {
        return Err(Error::param("samples and conditional variances differ in shape"));
    }
    if theta_samples.nrows() < 2 {
        return Err(Error::param("need at least two draws"));
    }
    Ok((0..theta_samples.ncols())
        .map(|j| {
            let col: Vec<f64> = theta_samples.column(j).iter().copied().collect();
            let v = sample_variance(&col);
            let raw = 1.0 - cond_var.column(j).mean() / v;
            FmiEstimate { gamma: raw.clamp(0.0, 1.0), raw }
        })
        .collect())
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// Zero when the coordinate never moved.
    pub ess: f64,
    pub ess_per_iter: f64,
    /// Sampling-phase seconds per effective draw (infinite when `ess == 0`).
    pub sec_per_ess: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub coords: Vec<CoordSummary>,
    pub n_draws: usize,
    pub acceptance: f64,
    pub ess_min: f64,
    pub ess_median: f64,
    pub ess_max: f64,
    /// Median over coordinates of `ESS / N`.
    pub t_eff_ratio_median: f64,
    pub t_eff_ratio_q025: f64,
    pub t_eff_ratio_q975: f64,
}

/// Summarises every recorded coordinate. `wall_time` defaults to the
/// trace's sampling-phase time.
pub fn summarize(trace: &Trace, wall_time: Option<Duration>) -> Result<ChainSummary> {
    let n = trace.n_rows();
    if n == 0 {
        return Err(Error::param("trace is empty"));
    }
    let secs = wall_time.unwrap_or(trace.timings.sample).as_secs_f64();
    let mut coords = Vec::with_capacity(trace.coord_names.len());
    for (j, name) in trace.coord_names.iter().enumerate() {
        let col = trace.column(j);
        let m = mean(&col);
        let sd = if n > 1 { sample_variance(&col).sqrt() } else { 0.0 };
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        let e = if sd > 0.0 && n >= MIN_ESS_LEN { ess(&col)? } else if sd > 0.0 { f64::NAN } else { 0.0 };
        coords.push(CoordSummary {
            name: name.clone(),
            mean: m,
            sd,
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
            ess: e,
            ess_per_iter: e / n as f64,
            sec_per_ess: if e > 0.0 { secs / e } else { f64::INFINITY },
        });
    }
    let esses: Vec<f64> = coords.iter().map(|c| c.ess).collect();
    let ratios: Vec<f64> = coords.iter().map(|c| c.ess_per_iter).collect();
    Ok(ChainSummary {
        n_draws: n,
        acceptance: trace.acceptance_rate(),
        ess_min: esses.iter().copied().fold(f64::INFINITY, f64::min),
        ess_median: quantile(&esses, 0.5),
        ess_max: esses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        t_eff_ratio_median: quantile(&ratios, 0.5),
        t_eff_ratio_q025: quantile(&ratios, 0.025),
        t_eff_ratio_q975: quantile(&ratios, 0.975),
        coords,
    })
}
