use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::percentile_sorted;
use crate::{Error, Result};

/// Paired block-bootstrap comparison of two loss streams.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub block_len: usize,
    pub n_resamples: usize,
    pub mean_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// CI excludes zero.
    pub significant: bool,
}

/// Chunks both aligned loss streams into contiguous `block_len`-token
/// blocks (final short block kept), resamples blocks with replacement, and
/// reports mean and 95% percentile interval of
/// `perplexity(a) - perplexity(b)` over the resamples.
pub fn bootstrap_diff_ci(
    losses_a: &[f64],
    losses_b: &[f64],
    block_len: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if losses_a.len() != losses_b.len() {
        return Err(Error::ShapeMismatch {
            context: "bootstrap loss streams",
            expected: format!("{}", losses_a.len()),
            got: format!("{}", losses_b.len()),
        });
    }
    if block_len == 0 || n_resamples == 0 {
        return Err(Error::InvalidParameter {
            name: "bootstrap",
            reason: "block_len and n_resamples must be positive".into(),
        });
    }
    if losses_a.len() < block_len {
        return Err(Error::InvalidParameter {
            name: "losses",
            reason: format!(
                "stream of {} tokens is shorter than one {block_len}-token block",
                losses_a.len()
            ),
        });
    }

    // Per-block sums; the resampled statistic only needs totals.
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    let mut i = 0;
    while i < losses_a.len() {
        let end = (i + block_len).min(losses_a.len());
        let sa: f64 = losses_a[i..end].iter().sum();
        let sb: f64 = losses_b[i..end].iter().sum();
        blocks.push((sa, sb, end - i));
        i = end;
    }
    let n_blocks = blocks.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let mut ta = 0.0;
        let mut tb = 0.0;
        let mut tokens = 0usize;
        for _ in 0..n_blocks {
            let (sa, sb, len) = blocks[rng.random_range(0..n_blocks)];
            ta += sa;
            tb += sb;
            tokens += len;
        }
        stats.push((ta / tokens as f64).exp() - (tb / tokens as f64).exp());
    }
    let mean_diff = stats.iter().sum::<f64>() / stats.len() as f64;
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci_low = percentile_sorted(&stats, 0.025);
    let ci_high = percentile_sorted(&stats, 0.975);
    Ok(BootstrapResult {
        block_len,
        n_resamples,
        mean_diff,
        ci_low,
        ci_high,
        significant: ci_low > 0.0 || ci_high < 0.0,
    })
}
