use crate::{Error, Result};

/// Per-observation working parameters.
///
/// `r` and `b` have length `n` for per-observation calibration, or 1 for
/// models with a single shared latent (the collapsed intercept sampler).
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationParams {
    pub r: Vec<f64>,
    pub b: Vec<f64>,
    pub epsilon: f64,
    pub frozen: bool,
}

impl CalibrationParams {
    /// `r = 1, b = 0`: the uncalibrated augmentation.
    pub fn identity(len: usize, epsilon: f64) -> Self {
        Self::constant(len, 1.0, 0.0, epsilon)
    }

    pub fn constant(len: usize, r: f64, b: f64, epsilon: f64) -> Self {
        Self { r: vec![r; len], b: vec![b; len], epsilon, frozen: false }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn frozen(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_identity(&self) -> bool {
        self.r.iter().all(|&r| r == 1.0) && self.b.iter().all(|&b| b == 0.0)
    }

    pub fn mean_log_r(&self) -> f64 {
        self.r.iter().map(|r| r.ln()).sum::<f64>() / self.r.len() as f64
    }

    pub fn mean_b(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.b.len() as f64
    }

    /// Checks lengths, positivity and finiteness.
    pub fn validate(&self, expected_len: usize) -> Result<()> {
        if self.r.len() != expected_len || self.b.len() != expected_len {
            return Err(Error::param(format!(
                "calibration has lengths (r: {}, b: {}), model expects {expected_len}",
                self.r.len(),
                self.b.len()
            )));
        }
        if let Some(i) = self.r.iter().position(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::param(format!("r[{i}] = {} must be positive and finite", self.r[i])));
        }
        if let Some(i) = self.b.iter().position(|b| !b.is_finite()) {
            return Err(Error::param(format!("b[{i}] = {} must be finite", self.b[i])));
        }
        Ok(())
    }

    /// Checks `r_i >= floor_i` for a per-index properness floor.
    pub fn check_floor(&self, floor: impl Fn(usize) -> f64) -> Result<()> {
        for (i, &r) in self.r.iter().enumerate() {
            let f = floor(i);
            if r < f {
                return Err(Error::param(format!("r[{i}] = {r} is below its properness floor {f}")));
            }
        }
        Ok(())
    }
}
