use nalgebra::{DMatrix, DVector};

/// `X' diag(w) X`, restricted to `rows` when given.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &[f64], rows: Option<&[usize]>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    let mut acc = |i: usize, wi: f64| {
        for j in 0..p {
            let xij = wi * x[(i, j)];
            for k in 0..=j {
                g[(j, k)] += xij * x[(i, k)];
            }
        }
    };
    match rows {
        Some(rows) => rows.iter().zip(w).for_each(|(&i, &wi)| acc(i, wi)),
        None => w.iter().enumerate().for_each(|(i, &wi)| acc(i, wi)),
    }
    for j in 0..p {
        for k in 0..j {
            g[(k, j)] = g[(j, k)];
        }
    }
    g
}

/// `X' v`, restricted to `rows` when given.
pub(crate) fn xt_vec(x: &DMatrix<f64>, v: &[f64], rows: Option<&[usize]>) -> DVector<f64> {
    let p = x.ncols();
    let mut out = DVector::zeros(p);
    match rows {
        Some(rows) => {
            for (&i, &vi) in rows.iter().zip(v) {
                for j in 0..p {
                    out[j] += x[(i, j)] * vi;
                }
            }
        }
        None => {
            for j in 0..p {
                out[j] = x.column(j).iter().zip(v).map(|(a, b)| a * b).sum();
            }
        }
    }
    out
}

/// Linear predictor `X theta`.
pub(crate) fn linear_predictor(x: &DMatrix<f64>, theta: &DVector<f64>) -> Vec<f64> {
    (x * theta).data.into()
}

/// Newton's method for a GLM log-likelihood. `obs(i, eta)` returns the score
/// and the negative second derivative of observation `i` at `eta`. Returns
/// `None` when an iterate leaves the finite range or the Hessian is singular
/// (e.g. separable data), so callers can keep their own starting point.
pub(crate) fn glm_newton(
    x: &DMatrix<f64>,
    start: &DVector<f64>,
    obs: impl Fn(usize, f64) -> (f64, f64),
    max_iter: usize,
) -> Option<DVector<f64>> {
    let mut theta = start.clone();
    for _ in 0..max_iter {
        let eta = linear_predictor(x, &theta);
        let (u, w): (Vec<f64>, Vec<f64>) = eta.iter().enumerate().map(|(i, &e)| obs(i, e)).unzip();
        let step = weighted_gram(x, &w, None).cholesky()?.solve(&xt_vec(x, &u, None));
        theta += &step;
        if !theta.iter().all(|v| v.is_finite() && v.abs() < 1e3) {
            return None;
        }
        if step.amax() < 1e-10 {
            return Some(theta);
        }
    }
    None
}
