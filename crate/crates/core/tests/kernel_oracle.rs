//! The implemented log acceptance ratio against
//! `log pi(t*) + log K(t* -> t) - log pi(t) - log K(t -> t*)`, with the
//! proposal kernel `K` obtained by integrating the augmentation sweep
//! numerically.

mod common;

use common::*;

#[test]
fn probit_log_ratio_matches_integrated_kernel() {
    let worst = probit_ratio_max_error(100, 2024);
    assert!(worst < 1e-6, "max |log ratio - oracle| = {worst:e}");
}

#[test]
fn pg_density_series_is_normalized() {
    for (b, c) in [(3.0, 0.0), (5.0, 1.0), (4.3, -0.7), (6.0, 2.5)] {
        let (lo, hi) = PG_RANGE;
        let mass = integrate(|w| pg_log_density(w, b, c).exp(), lo, hi, 400);
        let m1 = integrate(|w| w * pg_log_density(w, b, c).exp(), lo, hi, 400);
        let exact_mean = if c == 0.0 { b / 4.0 } else { b / (2.0 * c) * (c / 2.0).tanh() };
        assert!((mass - 1.0).abs() < 1e-8, "b={b} c={c} mass {mass}");
        assert!((m1 - exact_mean).abs() < 1e-8, "b={b} c={c} mean {m1} vs {exact_mean}");
    }
}

#[test]
fn poisson_log_ratio_matches_integrated_kernel() {
    let worst = poisson_ratio_max_error(100, 77);
    assert!(worst < 1e-6, "max |log ratio - oracle| = {worst:e}");
}
