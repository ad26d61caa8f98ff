//! The bias ↔ timescale calculus and everything built on it.
//!
//! A unit whose forget gate sits at `f₀ = σ(b_f)` under free input decays
//! its cell state by `f₀` each step, so its memory has the characteristic
//! forgetting time
//!
//! ```text
//! T = -1/log f₀ = 1/log(1 + e^{-b_f})
//! ```
//!
//! Inverting gives the bias that pins a desired timescale,
//! `b_f = -log(e^{1/T} - 1)`, with the input-gate bias held at `b_i = -b_f`
//! so that `i ≈ 1 - f`. Assigning per-unit timescales from an Inverse Gamma
//! distribution makes the population of exponential decays mix into a
//! power law; [`invgamma::mixture_decay`] makes that identity executable.

mod invgamma;
mod special;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use invgamma::{mixture_decay, InverseGammaParams, MixtureMethod};
pub use special::{ln_gamma, reg_lower_gamma, reg_upper_gamma};

/// Characteristic forgetting time for a forget-gate bias.
///
/// `T = 1/log(1 + e^{-b_f})`, evaluated through `log1p` so large positive
/// biases do not collapse the denominator to zero. The result is clamped to
/// the largest finite f64 instead of overflowing to infinity (b_f beyond
/// ~745 exhausts the exponent range).
pub fn forgetting_time(b_f: f64) -> Result<f64> {
    if !b_f.is_finite() {
        return Err(Error::InvalidParameter {
            name: "b_f",
            reason: format!("must be finite, got {b_f}"),
        });
    }
    // softplus(-b_f), branch keeps the exp argument non-positive
    let denom = if b_f < 0.0 {
        -b_f + b_f.exp().ln_1p()
    } else {
        (-b_f).exp().ln_1p()
    };
    let t = 1.0 / denom;
    Ok(if t.is_finite() { t } else { f64::MAX })
}

/// Forget-gate bias realizing a desired timescale: `b_f = -log(e^{1/T} - 1)`.
///
/// Uses `expm1` so large T (1/T near zero) keeps full precision; tiny T
/// (1/T past the exp range) returns the asymptote `-1/T` instead of -inf.
pub fn forget_bias(t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter {
            name: "T",
            reason: format!("timescale must be positive and finite, got {t}"),
        });
    }
    let inv = 1.0 / t;
    if inv > 700.0 {
        return Ok(-inv);
    }
    Ok(-(inv.exp_m1().ln()))
}

/// Forget-gate values of one unit over a set of test sequences.
#[derive(Debug, Clone)]
pub struct GateTrace {
    unit: usize,
    n_sequences: usize,
    n_steps: usize,
    /// Sequence-major: `values[j * n_steps + t]` is f_t of sequence j.
    values: Vec<f64>,
}

impl GateTrace {
    pub fn new(unit: usize, n_sequences: usize, n_steps: usize, values: Vec<f64>) -> Result<Self> {
        if n_sequences == 0 || n_steps == 0 || values.is_empty() {
            return Err(Error::EmptyInput("gate trace"));
        }
        if values.len() != n_sequences * n_steps {
            return Err(Error::ShapeMismatch {
                context: "GateTrace",
                expected: format!("{} values ({n_sequences}×{n_steps})", n_sequences * n_steps),
                got: format!("{}", values.len()),
            });
        }
        if values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::InvalidParameter {
                name: "gate values",
                reason: "forget gate values must lie strictly in (0, 1)".into(),
            });
        }
        Ok(GateTrace {
            unit,
            n_sequences,
            n_steps,
            values,
        })
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn n_sequences(&self) -> usize {
        self.n_sequences
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grand mean over all N×K gate values.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Estimated timescale `T_est = -1/log f̄` from a gate trace, with the grand
/// mean clamped to `[1e-12, 1 - 1e-12]` so saturated gates stay finite.
pub fn estimate_timescale(trace: &GateTrace) -> Result<f64> {
    const EPS: f64 = 1e-12;
    let mean = trace.mean().clamp(EPS, 1.0 - EPS);
    Ok(-1.0 / mean.ln())
}

/// How a spec's timescales were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimescaleSource {
    /// Literal per-unit list.
    FixedValues,
    /// InverseGamma(α, 1) via deterministic quantile placement or seeded
    /// sampling.
    InverseGamma { alpha: f64, mode: AssignMode, seed: u64 },
}

/// Placement of assigned timescales within the distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignMode {
    /// `T_i = quantile((i + 0.5)/n)`, sorted ascending; deterministic and
    /// seed-free. The default.
    Quantile,
    /// Seeded random draws, in draw order.
    Sample,
}

/// Source request for [`assign_timescales`].
#[derive(Debug, Clone, PartialEq)]
pub enum TimescaleAssignment {
    Fixed(Vec<f64>),
    InverseGamma { alpha: f64, mode: AssignMode },
}

/// Per-unit desired timescales plus the gate biases realizing them.
///
/// Invariants: every T > 0; `b_f = -log(e^{1/T} - 1)` exactly as computed by
/// [`forget_bias`]; `b_i = -b_f` bitwise; all arrays the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleSpec {
    timescales: Vec<f64>,
    forget_biases: Vec<f64>,
    input_biases: Vec<f64>,
    source: TimescaleSource,
}

impl TimescaleSpec {
    fn from_timescales(timescales: Vec<f64>, source: TimescaleSource) -> Result<Self> {
        let forget_biases = timescales
            .iter()
            .map(|&t| forget_bias(t))
            .collect::<Result<Vec<_>>>()?;
        let input_biases = forget_biases.iter().map(|&b| -b).collect();
        Ok(TimescaleSpec {
            timescales,
            forget_biases,
            input_biases,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.timescales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timescales.is_empty()
    }

    pub fn timescales(&self) -> &[f64] {
        &self.timescales
    }

    pub fn forget_biases(&self) -> &[f64] {
        &self.forget_biases
    }

    pub fn input_biases(&self) -> &[f64] {
        &self.input_biases
    }

    pub fn source(&self) -> &TimescaleSource {
        &self.source
    }
}

/// Builds the per-unit timescale assignment for a layer of `n_units`.
pub fn assign_timescales(
    n_units: usize,
    source: TimescaleAssignment,
    seed: u64,
) -> Result<TimescaleSpec> {
    if n_units == 0 {
        return Err(Error::EmptyInput("assign_timescales n_units"));
    }
    match source {
        TimescaleAssignment::Fixed(values) => {
            if values.is_empty() {
                return Err(Error::EmptyInput("fixed timescale list"));
            }
            if values.len() != n_units {
                return Err(Error::ShapeMismatch {
                    context: "assign_timescales fixed list",
                    expected: format!("{n_units}"),
                    got: format!("{}", values.len()),
                });
            }
            TimescaleSpec::from_timescales(values, TimescaleSource::FixedValues)
        }
        TimescaleAssignment::InverseGamma { alpha, mode } => {
            let params = InverseGammaParams::with_unit_scale(alpha)?;
            let timescales = match mode {
                AssignMode::Quantile => (0..n_units)
                    .map(|i| params.quantile((i as f64 + 0.5) / n_units as f64))
                    .collect::<Result<Vec<_>>>()?,
                AssignMode::Sample => params.sample(n_units, seed),
            };
            TimescaleSpec::from_timescales(timescales, TimescaleSource::InverseGamma { alpha, mode, seed })
        }
    }
}
