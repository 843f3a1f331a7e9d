//! Central-difference gradient checks.

use super::GanError;

/// Denominator floor so that gradients that are zero up to rounding do not
/// blow up the relative error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Index of the parameter with the largest error.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares `analytic` with central differences of `loss` around `params`,
/// one coordinate at a time. The relative error of coordinate `k` is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    params: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    eps: f64,
) -> Result<GradCheckReport, GanError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GanError::Config(format!("eps must be positive, got {eps}")));
    }
    if analytic.len() != params.len() {
        return Err(GanError::Shape(format!("{} gradient entries for {} parameters", analytic.len(), params.len())));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for k in 0..params.len() {
        probe[k] = params[k] + eps;
        let plus = loss(&probe);
        probe[k] = params[k] - eps;
        let minus = loss(&probe);
        probe[k] = params[k];
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(GanError::NonFiniteProbe { index: k });
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if err > report.max_rel_error || k == 0 {
            report = GradCheckReport { max_rel_error: err, worst_index: k, analytic: a, numeric };
        }
    }
    Ok(report)
}
