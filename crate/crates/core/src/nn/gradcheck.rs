//! Central finite-difference verification of analytic gradients.

/// Step used for central differences.
pub const FD_EPS: f64 = 1e-5;
/// Absolute floor of the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-6;

pub fn central_difference<F>(mut f: F, x: &mut [f64], i: usize, eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let orig = x[i];
    x[i] = orig + eps;
    let plus = f(x);
    x[i] = orig - eps;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * eps)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `analytic[i]` against a central difference of `loss` at each
/// probed coordinate of `x`. `x` is restored on return.
pub fn check_gradient<F>(
    x: &mut [f64],
    analytic: &[f64],
    mut loss: F,
    probes: &[usize],
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let mut report = GradCheckReport {
        probes: probes.len(),
        max_rel_error: 0.0,
        worst_index: None,
    };
    for &i in probes {
        let numeric = central_difference(&mut loss, x, i, FD_EPS);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_index = Some(i);
        }
    }
    report
}
