use crate::timescale::{reg_lower_gamma, InverseGammaParams};
use crate::{Error, Result};

/// Kolmogorov–Smirnov statistic of sorted samples against a CDF:
/// `D = max_i max(|i/n - F(x_(i))|, |(i-1)/n - F(x_(i))|)`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("ks_statistic samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = ((i + 1) as f64 / n - f).abs();
        let below = (i as f64 / n - f).abs();
        d = d.max(above.max(below));
    }
    Ok(d)
}

/// Candidate family for the timescale distribution fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistFamily {
    InverseGamma,
    /// Narrow Gaussian (σ = 0.1) truncated to positive support; stands in
    /// for a delta function at its mean.
    NarrowGaussian,
}

impl DistFamily {
    pub fn label(&self) -> &'static str {
        match self {
            DistFamily::InverseGamma => "inverse-gamma",
            DistFamily::NarrowGaussian => "narrow-gaussian",
        }
    }
}

/// Grid-search fit of one family.
#[derive(Debug, Clone)]
pub struct KsFitResult {
    pub family: DistFamily,
    pub grid: Vec<f64>,
    pub d_values: Vec<f64>,
    pub best_param: f64,
    pub best_d: f64,
}

const NARROW_SIGMA: f64 = 0.1;

/// Φ(z) through the regularized incomplete gamma: erf(x) = P(1/2, x²).
fn normal_cdf(z: f64) -> f64 {
    let erf = reg_lower_gamma(0.5, z * z / 2.0).unwrap_or(1.0);
    0.5 * (1.0 + z.signum() * erf)
}

/// CDF of N(mu, σ=0.1) truncated to x > 0.
fn truncated_gaussian_cdf(x: f64, mu: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z0 = normal_cdf(-mu / NARROW_SIGMA);
    ((normal_cdf((x - mu) / NARROW_SIGMA) - z0) / (1.0 - z0)).clamp(0.0, 1.0)
}

/// The documented default grid: 0.1 to 3.0 in steps of 0.1 (both the
/// Inverse Gamma α and the Gaussian μ).
pub fn default_param_grid() -> Vec<f64> {
    (1..=30).map(|i| i as f64 * 0.1).collect()
}

/// Evaluates the KS statistic of the samples against both families over
/// their parameter grids. Returns `(inverse_gamma_fit, narrow_gaussian_fit)`;
/// the winning family is the one with the smaller best D.
pub fn fit_timescale_distribution(
    samples: &[f64],
    alpha_grid: &[f64],
    mu_grid: &[f64],
) -> Result<(KsFitResult, KsFitResult)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("fit samples"));
    }
    if alpha_grid.is_empty() || mu_grid.is_empty() {
        return Err(Error::EmptyInput("parameter grid"));
    }
    if samples.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "timescale samples must be positive".into(),
        });
    }
    let mut ig = KsFitResult {
        family: DistFamily::InverseGamma,
        grid: alpha_grid.to_vec(),
        d_values: Vec::with_capacity(alpha_grid.len()),
        best_param: f64::NAN,
        best_d: f64::INFINITY,
    };
    for &alpha in alpha_grid {
        let params = InverseGammaParams::with_unit_scale(alpha)?;
        let d = ks_statistic(samples, |x| {
            if x <= 0.0 {
                0.0
            } else {
                params.cdf(x).unwrap_or(0.0)
            }
        })?;
        ig.d_values.push(d);
        if d < ig.best_d {
            ig.best_d = d;
            ig.best_param = alpha;
        }
    }
    let mut gauss = KsFitResult {
        family: DistFamily::NarrowGaussian,
        grid: mu_grid.to_vec(),
        d_values: Vec::with_capacity(mu_grid.len()),
        best_param: f64::NAN,
        best_d: f64::INFINITY,
    };
    for &mu in mu_grid {
        let d = ks_statistic(samples, |x| truncated_gaussian_cdf(x, mu))?;
        gauss.d_values.push(d);
        if d < gauss.best_d {
            gauss.best_d = d;
            gauss.best_param = mu;
        }
    }
    Ok((ig, gauss))
}
