use crate::{Error, Result};

/// Average ranks (1-based), ties get the mean of the ranks they span.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "spearman_rho",
            expected: format!("{}", a.len()),
            got: format!("{}", b.len()),
        });
    }
    if a.len() < 2 {
        return Err(Error::EmptyInput("spearman_rho needs at least two points"));
    }
    let ra = ranks(a);
    let rb = ranks(b);
    Ok(pearson(&ra, &rb))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Least-squares line fit; returns (slope, intercept, r²).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::EmptyInput("linear_fit needs two aligned points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "x",
            reason: "all x values identical".into(),
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Linear-interpolation percentile of a sorted slice, p in [0, 1].
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spearman_detects_monotone_relations() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 9.0, 16.5, 100.0];
        assert_relative_eq!(spearman_rho(&a, &b).unwrap(), 1.0);
        let c = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_relative_eq!(spearman_rho(&a, &c).unwrap(), -1.0);
    }

    #[test]
    fn spearman_handles_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 1.0, 2.0, 3.0];
        assert_relative_eq!(spearman_rho(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let (m, b, r2) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(m, 3.0, max_relative = 1e-12);
        assert_relative_eq!(b, -2.0, max_relative = 1e-9);
        assert_relative_eq!(r2, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn percentile_interpolates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(percentile_sorted(&s, 0.0), 1.0);
        assert_relative_eq!(percentile_sorted(&s, 1.0), 4.0);
        assert_relative_eq!(percentile_sorted(&s, 0.5), 2.5);
    }
}
