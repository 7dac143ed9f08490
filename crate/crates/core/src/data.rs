//! Datasets and synthetic rare-event generators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Poisson, StandardNormal};

use crate::dist::{normal_cdf, RngStream};
use crate::{Error, Result};

/// Design matrix, outcomes and optional per-row trial counts.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmDataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub trials: Option<Vec<f64>>,
}

impl GlmDataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, trials: Option<Vec<f64>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Data(format!("X has {} rows but y has {} entries", x.nrows(), y.len())));
        }
        if y.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if let Some(i) = y.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data(format!("y[{i}] = {} is not a non-negative count", y[i])));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("X has non-finite entries".into()));
        }
        if let Some(t) = &trials {
            if t.len() != y.len() {
                return Err(Error::Data("trial counts and outcomes differ in length".into()));
            }
            for (i, (&ti, &yi)) in t.iter().zip(&y).enumerate() {
                if !(ti >= 1.0 && ti.is_finite() && yi <= ti) {
                    return Err(Error::Data(format!("row {i}: need 1 <= N and y <= N, got y={yi}, N={ti}")));
                }
            }
        }
        Ok(Self { x, y, trials })
    }

    /// Column of ones with the first `s` outcomes equal to 1.
    pub fn intercept_only(n: usize, s: usize) -> Result<Self> {
        if s > n {
            return Err(Error::param(format!("cannot place {s} successes among {n} rows")));
        }
        let y = (0..n).map(|i| if i < s { 1.0 } else { 0.0 }).collect();
        Self::new(DMatrix::from_element(n, 1, 1.0), y, None)
    }

    /// Reads a CSV with header `y,N,x1,...,xp`. The `x` columns are the
    /// design matrix as given (include a column of ones for an intercept).
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        if header.len() < 2 || &header[0] != "y" || &header[1] != "N" {
            return Err(Error::Data("CSV header must start with y,N".into()));
        }
        let p = header.len() - 2;
        let (mut y, mut trials, mut xs) = (Vec::new(), Vec::new(), Vec::new());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let mut vals = Vec::with_capacity(rec.len());
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Data(format!("row {}: '{field}' is not a number", row + 1)))?;
                vals.push(v);
            }
            y.push(vals[0]);
            trials.push(vals[1]);
            xs.extend_from_slice(&vals[2..]);
        }
        Self::new(DMatrix::from_row_slice(y.len(), p, &xs), y, Some(trials))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn sum_y(&self) -> f64 {
        self.y.iter().sum()
    }

    pub fn binary_outcomes(&self) -> Result<Vec<bool>> {
        self.y
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(Error::Data(format!("y[{i}] = {v} is not binary"))),
            })
            .collect()
    }

    pub fn count_outcomes(&self) -> Result<Vec<f64>> {
        if let Some(i) = self.y.iter().position(|v| v.fract() != 0.0) {
            return Err(Error::Data(format!("y[{i}] = {} is not an integer count", self.y[i])));
        }
        Ok(self.y.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Link {
    Probit,
    Logistic,
}

impl Link {
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Link::Probit => normal_cdf(eta),
            Link::Logistic => 1.0 / (1.0 + (-eta).exp()),
        }
    }
}

/// How the intercept of a synthetic binary dataset is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Truth {
    /// Full coefficient vector, intercept first.
    Theta(Vec<f64>),
    /// Slopes given; intercept solved so that `E[sum y] = target`.
    TargetSumY { slopes: Vec<f64>, target: f64 },
    /// Intercept-only design with exactly `count` successes.
    ExactCount(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinarySpec {
    pub link: Link,
    pub n: usize,
    pub truth: Truth,
    /// Covariates are drawn iid `N(covariate_mean, 1)`.
    pub covariate_mean: f64,
}

/// Synthetic binary data. Returns the dataset and the coefficients used.
pub fn generate_binary(spec: &BinarySpec, rng: &mut RngStream) -> Result<(GlmDataset, Vec<f64>)> {
    if spec.n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    let slopes: &[f64] = match &spec.truth {
        Truth::ExactCount(s) => {
            let d = GlmDataset::intercept_only(spec.n, *s)?;
            let p = *s as f64 / spec.n as f64;
            let intercept = match spec.link {
                Link::Probit => crate::dist::normal_quantile(p.clamp(1e-300, 1.0 - 1e-16))?,
                Link::Logistic => (p / (1.0 - p)).ln(),
            };
            return Ok((d, vec![intercept]));
        }
        Truth::Theta(t) => {
            if t.is_empty() {
                return Err(Error::param("theta needs at least an intercept"));
            }
            &t[1..]
        }
        Truth::TargetSumY { slopes, .. } => slopes,
    };
    let p = slopes.len() + 1;
    let x = DMatrix::from_fn(spec.n, p, |_, j| {
        if j == 0 {
            1.0
        } else {
            spec.covariate_mean + rng.sample::<f64, _>(StandardNormal)
        }
    });
    let offset: Vec<f64> = (0..spec.n).map(|i| (1..p).map(|j| x[(i, j)] * slopes[j - 1]).sum()).collect();
    let intercept = match &spec.truth {
        Truth::Theta(t) => t[0],
        Truth::TargetSumY { target, .. } => solve_intercept(spec.link, &offset, *target)?,
        Truth::ExactCount(_) => unreachable!(),
    };
    let y = offset
        .iter()
        .map(|&o| if rng.random::<f64>() < spec.link.mean(intercept + o) { 1.0 } else { 0.0 })
        .collect();
    let mut theta = vec![intercept];
    theta.extend_from_slice(slopes);
    Ok((GlmDataset::new(x, y, None)?, theta))
}

/// Intercept `a` with `sum_i F(a + offset_i) = target`, by bisection.
pub fn solve_intercept(link: Link, offset: &[f64], target: f64) -> Result<f64> {
    let n = offset.len() as f64;
    if !(target > 0.0 && target < n) {
        return Err(Error::param(format!("target sum {target} must lie in (0, {n})")));
    }
    let expected = |a: f64| offset.iter().map(|&o| link.mean(a + o)).sum::<f64>();
    let (mut lo, mut hi) = (-1.0, 1.0);
    while expected(lo) > target {
        lo *= 2.0;
        if lo < -1e4 {
            return Err(Error::numerical("intercept bracket search", 1));
        }
    }
    while expected(hi) < target {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::numerical("intercept bracket search", 1));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Synthetic Poisson log-normal data:
/// `y_i ~ Poi(exp(x_i beta + tau_i))`, `tau_i ~ N(tau0, nu2)`,
/// covariates iid `N(0, 1)` with no intercept column.
#[derive(Clone, Debug)]
pub struct PoissonSynthetic {
    pub data: GlmDataset,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
}

pub fn generate_poisson(n: usize, beta: &[f64], tau0: f64, nu2: f64, rng: &mut RngStream) -> Result<PoissonSynthetic> {
    if n == 0 || !(nu2 >= 0.0) {
        return Err(Error::param("need n >= 1 and nu2 >= 0"));
    }
    let p = beta.len();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let tau_dist = Normal::new(tau0, nu2.sqrt()).map_err(|e| Error::param(e.to_string()))?;
    let tau: Vec<f64> = (0..n).map(|_| tau_dist.sample(rng)).collect();
    let eta = &x * DVector::from_column_slice(beta);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mu = (eta[i] + tau[i]).exp();
        let draw = if mu > 0.0 {
            Poisson::new(mu).map_err(|e| Error::param(e.to_string()))?.sample(rng)
        } else {
            0.0
        };
        y.push(draw);
    }
    Ok(PoissonSynthetic { data: GlmDataset::new(x, y, None)?, beta: beta.to_vec(), tau })
}

/// Parameters of the synthetic hierarchical binomial table.
#[derive(Clone, Debug, PartialEq)]
pub struct HierBinomialSpec {
    pub n: usize,
    /// Trials are `max(1, round(LogNormal(ln median, log_sd)))`.
    pub median_trials: f64,
    pub log_sd_trials: f64,
    pub theta0: f64,
    pub sigma2: f64,
}

impl Default for HierBinomialSpec {
    fn default() -> Self {
        Self { n: 2000, median_trials: 5000.0, log_sd_trials: 1.5, theta0: -12.0, sigma2: 7.7 }
    }
}

/// Returns the dataset (intercept column, `y`, trials) and the true unit logits.
pub fn generate_hier_binomial(spec: &HierBinomialSpec, rng: &mut RngStream) -> Result<(GlmDataset, Vec<f64>)> {
    if spec.n == 0 {
        return Err(Error::param("n must be at least 1"));
    }
    let trials_dist =
        LogNormal::new(spec.median_trials.ln(), spec.log_sd_trials).map_err(|e| Error::param(e.to_string()))?;
    let theta_dist = Normal::new(spec.theta0, spec.sigma2.sqrt()).map_err(|e| Error::param(e.to_string()))?;
    let mut trials = Vec::with_capacity(spec.n);
    let mut theta = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let big_n = trials_dist.sample(rng).round().clamp(1.0, 1e12);
        let t = theta_dist.sample(rng);
        let prob = 1.0 / (1.0 + (-t).exp());
        let yi = Binomial::new(big_n as u64, prob).map_err(|e| Error::param(e.to_string()))?.sample(rng) as f64;
        trials.push(big_n);
        theta.push(t);
        y.push(yi);
    }
    Ok((GlmDataset::new(DMatrix::from_element(spec.n, 1, 1.0), y, Some(trials))?, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let text = "y,N,x1,x2\n0,1,1,0.5\n3,10,1,-2\n";
        let d = GlmDataset::from_csv(text.as_bytes()).unwrap();
        assert_eq!(d.y, vec![0.0, 3.0]);
        assert_eq!(d.trials, Some(vec![1.0, 10.0]));
        assert_eq!(d.x, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, -2.0]));
        assert!(GlmDataset::from_csv("n,y\n1,0\n".as_bytes()).is_err());
        assert!(GlmDataset::from_csv("y,N,x1\n1,0,1\n".as_bytes()).is_err());
        assert!(GlmDataset::from_csv("y,N,x1\n0,1,abc\n".as_bytes()).is_err());
        assert!(GlmDataset::from_csv("y,N,x1\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn validation() {
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(GlmDataset::new(x.clone(), vec![0.0, 1.0], None).is_err());
        assert!(GlmDataset::new(x.clone(), vec![0.0, 1.0, -1.0], None).is_err());
        assert!(GlmDataset::new(x.clone(), vec![0.0, 3.0, 1.0], Some(vec![1.0, 2.0, 1.0])).is_err());
        let d = GlmDataset::new(x, vec![0.0, 2.0, 1.0], None).unwrap();
        assert!(d.binary_outcomes().is_err());
        assert_eq!(d.count_outcomes().unwrap(), vec![0.0, 2.0, 1.0]);
    }

    #[test]
    fn exact_count_mode() {
        let spec = BinarySpec { link: Link::Logistic, n: 1000, truth: Truth::ExactCount(1), covariate_mean: 0.0 };
        let (d, theta) = generate_binary(&spec, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(d.sum_y(), 1.0);
        assert!((theta[0] - (1.0f64 / 999.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn paper_configurations_are_rare() {
        let mut rng = RngStream::new(2, 0);
        let spec = BinarySpec {
            link: Link::Probit,
            n: 10_000,
            truth: Truth::Theta(vec![-5.0, 1.0, -1.0]),
            covariate_mean: 1.0,
        };
        let (d, _) = generate_binary(&spec, &mut rng).unwrap();
        // expected count is about 20; allow binomial noise
        assert!((5.0..=40.0).contains(&d.sum_y()), "{}", d.sum_y());
        let spec = BinarySpec {
            link: Link::Logistic,
            n: 100_000,
            truth: Truth::Theta(vec![-9.0, 1.0]),
            covariate_mean: 0.0,
        };
        let (d, _) = generate_binary(&spec, &mut rng).unwrap();
        assert!((25.0..=80.0).contains(&d.sum_y()), "{}", d.sum_y());
    }

    #[test]
    fn target_sum_mode_hits_target_on_average() {
        let target = 30.0;
        let reps = 40;
        let mut total = 0.0;
        for rep in 0..reps {
            let mut rng = RngStream::new(3, rep);
            let spec = BinarySpec {
                link: Link::Logistic,
                n: 5000,
                truth: Truth::TargetSumY { slopes: vec![1.0], target },
                covariate_mean: 0.0,
            };
            total += generate_binary(&spec, &mut rng).unwrap().0.sum_y();
        }
        let mean = total / reps as f64;
        // the mean over replicates has sd about sqrt(target / reps)
        assert!((mean - target).abs() < 3.0 * (target / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn intercept_solver() {
        let offset = vec![0.0; 100];
        let a = solve_intercept(Link::Probit, &offset, 1.0).unwrap();
        assert!((normal_cdf(a) - 0.01).abs() < 1e-12);
        assert!(solve_intercept(Link::Probit, &offset, 0.0).is_err());
    }

    #[test]
    fn hier_binomial_shape() {
        let (d, theta) = generate_hier_binomial(&HierBinomialSpec::default(), &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(d.n(), 2000);
        assert_eq!(theta.len(), 2000);
        let trials = d.trials.as_ref().unwrap();
        assert!(trials.iter().all(|&t| t >= 1.0));
        let zeros = d.y.iter().filter(|&&y| y == 0.0).count();
        assert!(zeros > 1000, "rare events should leave most units at zero: {zeros}");
    }

    #[test]
    fn poisson_generator() {
        let s = generate_poisson(200, &[0.5, -0.3], 1.0, 0.5, &mut RngStream::new(5, 0)).unwrap();
        assert_eq!(s.data.n(), 200);
        assert_eq!(s.data.p(), 2);
        assert!(s.data.count_outcomes().is_ok());
    }
}
