use crate::dist::{log1p_exp, log_expm1, log_logistic_density};

/// `2|psi| / tanh(|psi| / 2)`: ratio of the unit logistic information to the
/// conditional information a PG(1, psi) latent carries (limit 4 at 0).
pub fn fisher_factor(psi: f64) -> f64 {
    let a = psi.abs();
    if a < 1e-4 {
        let a2 = a * a;
        4.0 * (1.0 + a2 / 12.0 - a2 * a2 / 720.0)
    } else {
        2.0 * a / (0.5 * a).tanh()
    }
}

/// Fisher-matched `r` at `eta` using the previous bias `b_prev`:
/// `r = e^eta / (1 + e^eta)^2 * 2|eta + b| / tanh(|eta + b| / 2)`.
pub fn logistic_r(eta: f64, b_prev: f64) -> f64 {
    log_logistic_density(eta).exp() * fisher_factor(eta + b_prev)
}

/// Bias that preserves the likelihood at `eta`:
/// `(1 + e^eta) = (1 + e^(eta + b))^r`.
pub fn logistic_b(eta: f64, r: f64) -> f64 {
    log_expm1(log1p_exp(eta) / r) - eta
}

/// One adaptation update: `r` from `b_prev`, floored, then `b` from `r`.
pub fn logistic_calibration(eta: f64, b_prev: f64, floor: f64) -> (f64, f64) {
    let r = logistic_r(eta, b_prev).max(floor);
    (r, logistic_b(eta, r))
}
