use super::matrix::Matrix;
use super::ops::{log_sum_exp, sigmoid};
use crate::{Error, Result};

/// Losses and hidden-state gradient from one tied-softmax step.
pub struct SoftmaxStep {
    /// Negative log-likelihood per batch row, nats.
    pub losses: Vec<f64>,
    /// dL/d hidden for this step, already multiplied by `scale`.
    pub d_hidden: Matrix,
}

/// Cross-entropy under a softmax whose decoder weight IS the embedding
/// matrix: `logits = hidden · Eᵀ`, `loss_t = -log softmax(logits)[target]`.
///
/// `scale` multiplies the gradients (use `1/(batch·steps)` when the training
/// loss is the mean over a window; losses themselves are returned unscaled).
/// The decoder-side embedding gradient accumulates into `d_embedding`; the
/// lookup-side contribution is the caller's to add, both land in the single
/// shared buffer.
pub fn cross_entropy_tied_softmax(
    hidden: &Matrix,
    embedding: &Matrix,
    targets: &[u32],
    scale: f64,
    d_embedding: &mut Matrix,
) -> Result<SoftmaxStep> {
    let (losses, probs) = softmax_losses(hidden, embedding, targets)?;
    if d_embedding.shape() != embedding.shape() {
        return Err(Error::ShapeMismatch {
            context: "cross_entropy_tied_softmax d_embedding",
            expected: format!("{:?}", embedding.shape()),
            got: format!("{:?}", d_embedding.shape()),
        });
    }
    let batch = hidden.rows();
    let vocab = embedding.rows();
    // dlogits = softmax - onehot(target); then
    //   d_hidden   = dlogits · E
    //   dE        += dlogitsᵀ · hidden
    let mut dlogits = probs;
    for b in 0..batch {
        let row = dlogits.row_mut(b);
        row[targets[b] as usize] -= 1.0;
        if scale != 1.0 {
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let d_hidden = dlogits.matmul_nn(embedding)?;
    dlogits.matmul_tn_acc(hidden, &mut *d_embedding)?;
    let _ = vocab;
    Ok(SoftmaxStep { losses, d_hidden })
}

/// Loss-only tied softmax for evaluation passes.
pub fn tied_softmax_losses(hidden: &Matrix, embedding: &Matrix, targets: &[u32]) -> Result<Vec<f64>> {
    softmax_losses(hidden, embedding, targets).map(|(l, _)| l)
}

fn softmax_losses(
    hidden: &Matrix,
    embedding: &Matrix,
    targets: &[u32],
) -> Result<(Vec<f64>, Matrix)> {
    if hidden.cols() != embedding.cols() {
        return Err(Error::ShapeMismatch {
            context: "tied softmax width",
            expected: format!("hidden width {}", embedding.cols()),
            got: format!("{}", hidden.cols()),
        });
    }
    let batch = hidden.rows();
    if targets.len() != batch {
        return Err(Error::ShapeMismatch {
            context: "tied softmax targets",
            expected: format!("{batch}"),
            got: format!("{}", targets.len()),
        });
    }
    let vocab = embedding.rows();
    for &t in targets {
        if t as usize >= vocab {
            return Err(Error::TokenOutOfRange {
                id: t,
                vocab_size: vocab,
            });
        }
    }
    let logits = hidden.matmul_nt(embedding)?;
    let mut probs = Matrix::zeros(batch, vocab);
    let mut losses = Vec::with_capacity(batch);
    for b in 0..batch {
        let row = logits.row(b);
        let lse = log_sum_exp(row);
        losses.push(lse - row[targets[b] as usize]);
        let prow = probs.row_mut(b);
        for (p, &l) in prow.iter_mut().zip(row.iter()) {
            *p = (l - lse).exp();
        }
    }
    Ok((losses, probs))
}

/// Mean squared error between `σ(outputs)` and 0/1 targets:
/// `loss = mean((σ(o) - y)²)` over all elements. Returns the loss and
/// dL/d outputs.
pub fn sigmoid_mse(outputs: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if outputs.shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            context: "sigmoid_mse",
            expected: format!("{:?}", outputs.shape()),
            got: format!("{:?}", targets.shape()),
        });
    }
    for &t in targets.data() {
        if t != 0.0 && t != 1.0 {
            return Err(Error::InvalidParameter {
                name: "targets",
                reason: format!("sigmoid_mse targets must be exactly 0 or 1, got {t}"),
            });
        }
    }
    let n = outputs.data().len() as f64;
    let mut loss = 0.0;
    let mut d_out = Matrix::zeros(outputs.rows(), outputs.cols());
    for idx in 0..outputs.data().len() {
        let s = sigmoid(outputs.data()[idx]);
        let diff = s - targets.data()[idx];
        loss += diff * diff;
        d_out.data_mut()[idx] = 2.0 * diff * s * (1.0 - s) / n;
    }
    Ok((loss / n, d_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn equal_logits_give_log_vocab_loss() {
        // Zero hidden state: logits all equal, loss = log V per token.
        let hidden = Matrix::zeros(3, 4);
        let embedding = Matrix::from_vec(5, 4, (0..20).map(|i| i as f64 * 0.1).collect()).unwrap();
        let losses = tied_softmax_losses(&hidden, &embedding, &[0, 2, 4]).unwrap();
        for l in losses {
            assert_relative_eq!(l, 5.0_f64.ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn two_class_closed_form() {
        // V=2, logits (ln 3, 0), target 0: loss = -ln(3/4).
        let hidden = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let embedding = Matrix::from_vec(2, 1, vec![3.0_f64.ln(), 0.0]).unwrap();
        let losses = tied_softmax_losses(&hidden, &embedding, &[0]).unwrap();
        assert_relative_eq!(losses[0], -(0.75_f64.ln()), max_relative = 1e-14);
    }

    #[test]
    fn rejects_out_of_vocab_target() {
        let hidden = Matrix::zeros(1, 2);
        let embedding = Matrix::zeros(3, 2);
        assert!(matches!(
            tied_softmax_losses(&hidden, &embedding, &[3]),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn sigmoid_mse_zero_output_zero_target() {
        let o = Matrix::zeros(1, 2);
        let y = Matrix::zeros(1, 2);
        let (loss, _) = sigmoid_mse(&o, &y).unwrap();
        assert_relative_eq!(loss, 0.25); // (σ(0) - 0)² = 0.25 per element
    }

    #[test]
    fn sigmoid_mse_exact_match_is_flat_zero() {
        // Large logits drive σ to the target within f64; loss and gradient
        // collapse to ~0.
        let o = Matrix::from_vec(1, 2, vec![40.0, -40.0]).unwrap();
        let y = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        let (loss, grad) = sigmoid_mse(&o, &y).unwrap();
        assert!(loss < 1e-30);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-30));
    }

    #[test]
    fn sigmoid_mse_rejects_soft_targets() {
        let o = Matrix::zeros(1, 1);
        let y = Matrix::from_vec(1, 1, vec![0.5]).unwrap();
        assert!(sigmoid_mse(&o, &y).is_err());
    }
}
