//! Regression losses with analytic gradients.

use crate::error::{check_len, Result};
use crate::scalar::Real;

/// Log-variance is clamped into this range before exponentiation.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct NllOutput<T> {
    pub loss: T,
    pub d_mean: Vec<T>,
    pub d_log_var: Vec<T>,
}

/// Heteroscedastic Gaussian negative log-likelihood (constants dropped):
/// `sum_d (mean_d - target_d)^2 * exp(-lv_d) + lv_d` with `lv` clamped.
/// The log-variance gradient is zero where the clamp is active.
pub fn gaussian_nll<T: Real>(mean: &[T], log_var: &[T], target: &[T]) -> Result<NllOutput<T>> {
    check_len("nll log-variance", mean.len(), log_var.len())?;
    check_len("nll target", mean.len(), target.len())?;
    let (lo, hi) = (T::lit(LOG_VAR_MIN), T::lit(LOG_VAR_MAX));
    let mut out = NllOutput {
        loss: T::zero(),
        d_mean: Vec::with_capacity(mean.len()),
        d_log_var: Vec::with_capacity(mean.len()),
    };
    for ((&mu, &lv), &y) in mean.iter().zip(log_var).zip(target) {
        let clamped = lv.max(lo).min(hi);
        let inv_var = (-clamped).exp();
        let r = mu - y;
        let sq = r * r * inv_var;
        out.loss = out.loss + sq + clamped;
        out.d_mean.push(T::lit(2.0) * r * inv_var);
        out.d_log_var.push(if lv > lo && lv < hi {
            T::one() - sq
        } else {
            T::zero()
        });
    }
    Ok(out)
}

/// Mean squared error over components and its gradient `2 (pred - target) / dim`.
pub fn mse<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    check_len("mse target", pred.len(), target.len())?;
    let n = T::lit(pred.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let r = p - t;
        loss = loss + r * r;
        grad.push(T::lit(2.0) * r / n);
    }
    Ok((loss / n, grad))
}
