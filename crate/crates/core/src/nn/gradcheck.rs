//! Central finite-difference gradient checking.

/// Scale floor below which errors are measured absolutely rather than
/// relative to gradient magnitude.
pub const REL_FLOOR: f64 = 1e-4;

/// `|a − b| / max(|a|, |b|, REL_FLOOR)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Central difference of `f` at coordinate `i` of `theta`; `theta` is
/// restored afterwards.
pub fn central_difference(
    f: &impl Fn(&[f64]) -> f64,
    theta: &mut [f64],
    i: usize,
    eps: f64,
) -> f64 {
    let orig = theta[i];
    theta[i] = orig + eps;
    let up = f(theta);
    theta[i] = orig - eps;
    let down = f(theta);
    theta[i] = orig;
    (up - down) / (2.0 * eps)
}

/// Worst-case disagreement between an analytic gradient and central
/// differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub worst_rel: f64,
    pub worst_abs: f64,
}

pub fn compare_gradient(
    f: impl Fn(&[f64]) -> f64,
    theta: &mut [f64],
    analytic: &[f64],
    eps: f64,
) -> GradReport {
    assert_eq!(theta.len(), analytic.len(), "gradient length");
    let mut report = GradReport {
        worst_rel: 0.0,
        worst_abs: 0.0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = central_difference(&f, theta, i, eps);
        report.worst_rel = report.worst_rel.max(rel_error(a, numeric));
        report.worst_abs = report.worst_abs.max((a - numeric).abs());
    }
    report
}

/// Largest relative error between `analytic` and central differences of `f`
/// over every coordinate of `theta`.
pub fn check_gradient(
    f: impl Fn(&[f64]) -> f64,
    theta: &mut [f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    compare_gradient(f, theta, analytic, eps).worst_rel
}
