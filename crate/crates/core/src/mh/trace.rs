use std::time::Duration;

use nalgebra::DMatrix;

use super::CalibrationParams;

/// One adaptation-phase record: the calibration in force at `iter` and
/// whether that iteration's proposal was accepted.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptRow {
    pub iter: usize,
    pub mean_log_r: f64,
    pub mean_b: f64,
    pub acceptance: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimings {
    pub adapt: Duration,
    pub burn: Duration,
    pub sample: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.adapt + self.burn + self.sample
    }
}

/// Output of one chain. Per-iteration rows cover the post-burn-in
/// iterations that survive thinning.
#[derive(Clone, Debug)]
pub struct Trace {
    pub coord_names: Vec<String>,
    /// Recorded coordinates, one row per kept iteration.
    pub theta_samples: DMatrix<f64>,
    /// Conditional variance of each recorded coordinate given the latents
    /// (NaN for coordinates without one, e.g. hyperparameters).
    pub cond_var: DMatrix<f64>,
    /// Fraction of blocks accepted: 0 or 1 for a joint update, the share
    /// of accepted units for per-coordinate updates.
    pub accepted: Vec<f64>,
    /// Log acceptance ratio, summed over blocks.
    pub log_ratio: Vec<f64>,
    pub adaptation: Vec<AdaptRow>,
    pub timings: PhaseTimings,
    pub accept_rate_adapt: Option<f64>,
    pub accept_rate_frozen: Option<f64>,
    pub final_calibration: CalibrationParams,
}

impl Trace {
    pub fn n_rows(&self) -> usize {
        self.theta_samples.nrows()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.theta_samples.column(j).iter().copied().collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.coord_names.iter().position(|c| c == name).map(|j| self.column(j))
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return f64::NAN;
        }
        self.accepted.iter().sum::<f64>() / self.accepted.len() as f64
    }
}
