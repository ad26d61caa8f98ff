/// Numerically stable logistic function.
///
/// Branches on sign so the exponential argument is always non-positive:
///   x ≥ 0:  1 / (1 + e^{-x})
///   x < 0:  e^{x} / (1 + e^{x})
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// log(Σ e^{v}) with the max subtracted first.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_symmetry_and_extremes() {
        assert_relative_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(3.0) + sigmoid(-3.0), 1.0, max_relative = 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(800.0) > 1.0 - 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = [1000.0, 1000.0];
        assert_relative_eq!(log_sum_exp(&v), 1000.0 + 2.0_f64.ln(), max_relative = 1e-15);
    }
}
