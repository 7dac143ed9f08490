//! Quadrature oracles and test statistics shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use cda_core::data::GlmDataset;
use cda_core::dist::RngStream;
use cda_core::poisson::{PoissonHypers, PoissonLogNormalModel};
use cda_core::probit::ProbitModel;
use cda_core::{CalibrationParams, CdaModel, ChainState};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule: `(abscissae, weights)` on `[a, b]`.
pub fn composite_rule(a: f64, b: f64, panels: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(m);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * m);
    let mut ws = Vec::with_capacity(panels * m);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for k in 0..m {
            xs.push(mid + 0.5 * h * gx[k]);
            ws.push(0.5 * h * gw[k]);
        }
    }
    (xs, ws)
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (xs, ws) = composite_rule(a, b, panels, 10);
    xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum()
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_density(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Density of `theta*` after one augmentation sweep of a three-observation,
/// flat-prior probit model from `theta`: the latents are truncated normals
/// `N(theta + b_i, r_i)` and `theta* | z ~ N(v sum w_i (z_i - b_i), v)`,
/// `w_i = 1 / r_i`, `v = 1 / sum w_i`. The first two latents are integrated
/// numerically and the third in closed form.
pub fn probit_kernel(theta: f64, theta_star: f64, y: [bool; 3], r: [f64; 3], b: [f64; 3]) -> f64 {
    let w: Vec<f64> = r.iter().map(|ri| 1.0 / ri).collect();
    let v = 1.0 / w.iter().sum::<f64>();
    let mu: Vec<f64> = (0..3).map(|i| theta + b[i]).collect();
    // side probabilities and standardized ranges
    let range = |i: usize| {
        let t = -mu[i] / r[i].sqrt();
        if y[i] {
            (t, t.max(0.0) + 12.0, big_phi(mu[i] / r[i].sqrt()))
        } else {
            (t.min(0.0) - 12.0, t, big_phi(-mu[i] / r[i].sqrt()))
        }
    };
    let (lo0, hi0, p0) = range(0);
    let (lo1, hi1, p1) = range(1);
    let (u0, w0) = composite_rule(lo0, hi0, 40, 10);
    let (u1, w1) = composite_rule(lo1, hi1, 40, 10);
    let c = v * w[2];
    let (mu2, r2) = (mu[2], r[2]);
    let r_post = 1.0 / (1.0 / r2 + c * c / v);
    let side2 = |m: f64| {
        let s = m / r_post.sqrt();
        if y[2] {
            big_phi(s)
        } else {
            big_phi(-s)
        }
    };
    let p2 = if y[2] { big_phi(mu2 / r2.sqrt()) } else { big_phi(-mu2 / r2.sqrt()) };
    let mut total = 0.0;
    for (&a, &wa) in u0.iter().zip(&w0) {
        let z0 = mu[0] + r[0].sqrt() * a;
        let fa = wa * phi(a) / p0;
        for (&bb, &wb) in u1.iter().zip(&w1) {
            let z1 = mu[1] + r[1].sqrt() * bb;
            let shift = v * (w[0] * (z0 - b[0]) + w[1] * (z1 - b[1])) - v * w[2] * b[2];
            let m_post = r_post * (mu2 / r2 + c * (theta_star - shift) / v);
            let inner = normal_density(theta_star, shift + c * mu2, v + c * c * r2) * side2(m_post) / p2;
            total += fa * wb * phi(bb) / p1 * inner;
        }
    }
    total
}

/// Log density of PG(b, c) from the alternating series for `J*(b)`,
/// evaluated with the largest term factored out.
pub fn pg_log_density(w: f64, b: f64, c: f64) -> f64 {
    let mut terms = Vec::with_capacity(256);
    for n in 0..400 {
        let k = 2.0 * n as f64 + b;
        let lt = ln_gamma(n as f64 + b) - ln_gamma(n as f64 + 1.0) + k.ln() - 0.5 * (2.0 * PI * w.powi(3)).ln() - k * k / (8.0 * w);
        terms.push(lt);
        if n > 20 && lt < terms.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 60.0 {
            break;
        }
    }
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().enumerate().map(|(n, t)| if n % 2 == 0 { (t - m).exp() } else { -(t - m).exp() }).sum();
    if s.is_nan() || s <= 0.0 {
        // cancellation noise in the far right tail, where the density is negligible
        return f64::NEG_INFINITY;
    }
    let log_cosh = 0.5 * c.abs() + (-c.abs()).exp().ln_1p() - std::f64::consts::LN_2;
    m + s.ln() + (b - 1.0) * std::f64::consts::LN_2 - ln_gamma(b) + b * log_cosh - 0.5 * c * c * w
}

/// Integration range for PG densities with shape of order 5. The series
/// loses relative accuracy beyond w ~ 8 where the density is below 1e-11.
pub const PG_RANGE: (f64, f64) = (0.02, 9.0);

/// Density of `tau*` after one augmentation sweep of a single
/// Poisson log-normal random effect without covariates:
/// `z ~ PG(r lambda, tau + b - log lambda)`,
/// `tau* | z ~ N((y - r lambda / 2 + z (log lambda - b) + tau0 / nu2) / D, 1 / D)`, `D = z + 1 / nu2`.
#[allow(clippy::too_many_arguments)]
pub fn poisson_kernel(tau: f64, tau_star: f64, y: f64, r: f64, b: f64, lambda: f64, tau0: f64, nu2: f64) -> f64 {
    let ll = lambda.ln();
    let shape = r * lambda;
    let tilt = tau + b - ll;
    let (lo, hi) = PG_RANGE;
    integrate(
        |z| {
            let d = z + 1.0 / nu2;
            let mean = (y - 0.5 * shape + z * (ll - b) + tau0 / nu2) / d;
            pg_log_density(z, shape, tilt).exp() * normal_density(tau_star, mean, 1.0 / d)
        },
        lo,
        hi,
        400,
    )
}

/// Normalized density, cdf and quantiles of a 1-d log-density on `[lo, hi]`.
pub struct Quadrature1d {
    pub lo: f64,
    pub hi: f64,
    log_norm: f64,
    log_density: Box<dyn Fn(f64) -> f64>,
}

impl Quadrature1d {
    pub fn new(log_density: impl Fn(f64) -> f64 + 'static, lo: f64, hi: f64) -> Self {
        let (xs, _) = composite_rule(lo, hi, 400, 10);
        let peak = xs.iter().map(|&x| log_density(x)).fold(f64::NEG_INFINITY, f64::max);
        let z = integrate(|x| (log_density(x) - peak).exp(), lo, hi, 400);
        Self { lo, hi, log_norm: peak + z.ln(), log_density: Box::new(log_density) }
    }

    pub fn density(&self, x: f64) -> f64 {
        ((self.log_density)(x) - self.log_norm).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        integrate(|t| self.density(t), self.lo, x.min(self.hi), 200)
    }

    pub fn mean(&self) -> f64 {
        integrate(|t| t * self.density(t), self.lo, self.hi, 400)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let (mut a, mut b) = (self.lo, self.hi);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.cdf(m) < p {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// Pearson chi-square statistic and p-value of `samples` against
/// `bins` equal-probability bins of `q`.
pub fn chi_square_gof(samples: &[f64], q: &Quadrature1d, bins: usize) -> (f64, f64) {
    let edges: Vec<f64> = (1..bins).map(|k| q.quantile(k as f64 / bins as f64)).collect();
    let mut counts = vec![0usize; bins];
    for &s in samples {
        counts[edges.partition_point(|&e| e < s)] += 1;
    }
    let expected = samples.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat);
    (stat, p)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lam = (ne + 0.12 + 0.11 / ne) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64 * lam).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Every `k`-th element.
pub fn thin(x: &[f64], k: usize) -> Vec<f64> {
    x.iter().step_by(k).copied().collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

fn probit_log_target(theta: f64, y: [bool; 3]) -> f64 {
    y.iter().map(|&yi| if yi { big_phi(theta).ln() } else { big_phi(-theta).ln() }).sum()
}

/// Largest `|implemented log ratio - oracle|` over `pairs` random
/// `(theta, theta*, r, b)` draws on the three-observation probit instance.
pub fn probit_ratio_max_error(pairs: usize, seed: u64) -> f64 {
    let y = [true, false, false];
    let data = GlmDataset::new(DMatrix::from_element(3, 1, 1.0), vec![1.0, 0.0, 0.0], None).unwrap();
    let model = ProbitModel::new(&data).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let theta: f64 = rng.random_range(-2.0..1.5);
        let theta_star: f64 = rng.random_range(-2.0..1.5);
        let r: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.5..4.0));
        let b: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let calib = CalibrationParams { r: r.to_vec(), b: b.to_vec(), epsilon: 1e-6, frozen: true };
        let state = ChainState { theta: DVector::from_element(1, theta), latents: Vec::new(), hypers: () };
        let got: f64 = model.log_ratio(&state, &DVector::from_element(1, theta_star), &calib).unwrap().iter().sum();
        let want = probit_log_target(theta_star, y) - probit_log_target(theta, y)
            + probit_kernel(theta_star, theta, y, r, b).ln()
            - probit_kernel(theta, theta_star, y, r, b).ln();
        worst = worst.max((got - want).abs());
    }
    worst
}

/// Same for a five-unit Poisson log-normal model without covariates at
/// fixed hyperparameters; one random effect moves per pair.
pub fn poisson_ratio_max_error(pairs: usize, seed: u64) -> f64 {
    let lambda = 1e3f64;
    let y = vec![1.0, 0.0, 2.0, 3.0, 0.0];
    let h = PoissonHypers { tau0: 0.5, nu2: 1.3 };
    let data = GlmDataset::new(DMatrix::zeros(5, 0), y.clone(), None).unwrap();
    let model = PoissonLogNormalModel::new(&data, lambda).unwrap().with_fixed_hypers(h);
    let log_target = |tau: f64, yi: f64| yi * tau - tau.exp() - (tau - h.tau0).powi(2) / (2.0 * h.nu2);
    let mut rng = RngStream::new(seed, 0);
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let i = k % 5;
        let tau: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..2.0)).collect();
        let tau_star_i: f64 = rng.random_range(-1.0..2.0);
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(3.0..6.0) / lambda).collect();
        let b: Vec<f64> = (0..5).map(|_| lambda.ln() + rng.random_range(-2.0..1.0)).collect();
        let calib = CalibrationParams { r: r.clone(), b: b.clone(), epsilon: 1e-9, frozen: true };
        let state = ChainState { theta: DVector::from_vec(tau.clone()), latents: Vec::new(), hypers: h };
        let mut proposed = DVector::from_vec(tau.clone());
        proposed[i] = tau_star_i;
        let got: f64 = model.log_ratio(&state, &proposed, &calib).unwrap().iter().sum();
        let kernel = |from: f64, to: f64| poisson_kernel(from, to, y[i], r[i], b[i], lambda, h.tau0, h.nu2);
        let want = log_target(tau_star_i, y[i]) - log_target(tau[i], y[i]) + kernel(tau_star_i, tau[i]).ln()
            - kernel(tau[i], tau_star_i).ln();
        worst = worst.max((got - want).abs());
    }
    worst
}
