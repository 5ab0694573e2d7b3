//! Central finite-difference gradient checking.

use super::tensor::{Grads, ParamSet};

/// Relative discrepancy `|fd − an| / max(|fd| + |an|, 1e-6)`.
pub fn rel_error(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / (fd.abs() + an.abs()).max(1e-6)
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over the listed flat parameter indices.
pub fn max_rel_error_at(
    params: &mut ParamSet,
    analytic: &Grads,
    eps: f64,
    indices: impl IntoIterator<Item = usize>,
    loss: impl Fn(&ParamSet) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in indices {
        let orig = params.flat_get(i);
        params.flat_set(i, orig + eps);
        let up = loss(params);
        params.flat_set(i, orig - eps);
        let down = loss(params);
        params.flat_set(i, orig);
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max(rel_error(fd, analytic.flat_get(i)));
    }
    worst
}

/// [`max_rel_error_at`] over every parameter.
pub fn max_rel_error(params: &mut ParamSet, analytic: &Grads, eps: f64, loss: impl Fn(&ParamSet) -> f64) -> f64 {
    let n = params.count();
    max_rel_error_at(params, analytic, eps, 0..n, loss)
}
