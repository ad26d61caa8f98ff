use crate::{Error, Result};

/// One checked coordinate.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
    /// Coordinate belongs to a frozen buffer: gradient is reported but the
    /// optimizer must never apply it.
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Central-difference comparison of an analytic gradient.
///
/// `eval` receives a full parameter vector and returns the scalar loss at
/// that point; `theta` is the expansion point, `analytic` the gradient under
/// test. Large buffers can be subsampled with `stride > 1` (every stride-th
/// coordinate is checked, which keeps runs O(len/stride) forward passes).
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, 1e-6)`; the
/// absolute floor keeps finite-difference noise on near-zero gradients from
/// reading as failures.
pub fn grad_check(
    mut eval: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    frozen: Option<&[bool]>,
    eps: f64,
    stride: usize,
) -> Result<GradCheckReport> {
    if eps <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "must be positive".into(),
        });
    }
    if theta.len() != analytic.len() {
        return Err(Error::ShapeMismatch {
            context: "grad_check",
            expected: format!("{}", theta.len()),
            got: format!("{}", analytic.len()),
        });
    }
    if let Some(mask) = frozen {
        if mask.len() != theta.len() {
            return Err(Error::ShapeMismatch {
                context: "grad_check frozen mask",
                expected: format!("{}", theta.len()),
                got: format!("{}", mask.len()),
            });
        }
    }
    let stride = stride.max(1);
    let mut point = theta.to_vec();
    let mut entries = Vec::new();
    let mut max_rel = 0.0_f64;
    for idx in (0..theta.len()).step_by(stride) {
        let orig = point[idx];
        point[idx] = orig + eps;
        let up = eval(&point);
        point[idx] = orig - eps;
        let down = eval(&point);
        point[idx] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max(rel);
        entries.push(GradCheckEntry {
            index: idx,
            analytic: a,
            numeric,
            rel_err: rel,
            frozen: frozen.map(|m| m[idx]).unwrap_or(false),
        });
    }
    Ok(GradCheckReport {
        entries,
        max_rel_err: max_rel,
    })
}
