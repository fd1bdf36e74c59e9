//! Fixed-step explicit midpoint integration over `tau` in `[0, 1]`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Integrates `dx/dtau = field(tau, x)` from `tau = 0` to `tau = 1` with
/// `n_steps` explicit midpoint steps:
///
/// ```text
/// x <- x + h * field(tau + h/2, x + (h/2) * field(tau, x)),   h = 1 / n_steps
/// ```
pub fn midpoint_integrate<T, F>(mut field: F, x0: &[T], n_steps: usize) -> Result<Vec<T>>
where
    T: Real,
    F: FnMut(T, &[T]) -> Result<Vec<T>>,
{
    if n_steps == 0 {
        return Err(Error::Config(
            "midpoint integration needs n_steps >= 1".into(),
        ));
    }
    let h = T::one() / T::lit(n_steps as f64);
    let half = h / T::lit(2.0);
    let mut x = x0.to_vec();
    let mut mid = vec![T::zero(); x.len()];
    for k in 0..n_steps {
        let tau = T::lit(k as f64) * h;
        let k1 = field(tau, &x)?;
        for ((m, &xv), &d) in mid.iter_mut().zip(&x).zip(&k1) {
            *m = xv + half * d;
        }
        let k2 = field(tau + half, &mid)?;
        for (xv, &d) in x.iter_mut().zip(&k2) {
            *xv = *xv + h * d;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "midpoint state after step {} of {n_steps}",
                k + 1
            )));
        }
    }
    Ok(x)
}
