//! Measurement side of the laboratory: perplexity by word-frequency bin,
//! block-bootstrap confidence intervals, gate-trace timescale estimation,
//! Kolmogorov–Smirnov distribution fits, unit-ablation routing, word
//! ablation cell-state decay, and Dyck accuracy by sequence timescale.

mod ablation;
mod bootstrap;
mod dyck_eval;
mod ks;
mod reports;
mod stats;
mod traces;
mod word_ablation;

use crate::corpus::{
    extract_window, frequency_bins, make_batch_plan, BatchMode, FrequencyBin, Vocab,
};
use crate::model::{AblationMask, EvalHooks, LanguageModel};
use crate::{Error, Result};

pub use ablation::{
    ablate_and_route, evaluate_lm_with_masks, AblationGroup, AblationReport, SortKey,
};
pub use bootstrap::{bootstrap_diff_ci, BootstrapResult};
pub use dyck_eval::{dyck_accuracy_by_timescale, DistanceBucket, DyckAccuracyReport};
pub use ks::{
    default_param_grid, fit_timescale_distribution, ks_statistic, DistFamily, KsFitResult,
};
pub use reports::{
    write_bootstrap_csv, write_decay_csv, write_dyck_acc_csv, write_ksfit_csv, write_routing_csv,
    write_table1_csv, Table1Row,
};
pub use stats::{linear_fit, percentile_sorted, spearman_rho};
pub use traces::{collect_gate_traces, GateTraceSet};
pub use word_ablation::{word_ablation_decay, DecayReport, GroupCurve, WordAblationPolicy};

/// One predicted token with its loss and frequency bin.
#[derive(Debug, Clone)]
pub struct LossRecord {
    /// Position of the predicted token in the evaluated stream.
    pub position: usize,
    pub token: u32,
    /// Negative log-likelihood, nats.
    pub nll: f64,
    pub bin: FrequencyBin,
}

/// Stateful evaluation of a token stream: batch of one, length-70 windows,
/// state carried across windows, zero-initialized at the stream start. One
/// record per predicted token.
pub fn evaluate_lm(model: &LanguageModel, tokens: &[u32], vocab: &Vocab) -> Result<Vec<LossRecord>> {
    evaluate_lm_with_masks(model, tokens, vocab, &[])
}

pub(crate) fn evaluate_stream(
    model: &LanguageModel,
    tokens: &[u32],
    vocab: &Vocab,
    masks: &[AblationMask],
) -> Result<Vec<LossRecord>> {
    if vocab.len() != model.config.vocab_size {
        return Err(Error::ShapeMismatch {
            context: "evaluate_lm vocabulary",
            expected: format!("{}", model.config.vocab_size),
            got: format!("{}", vocab.len()),
        });
    }
    let bins = frequency_bins(vocab);
    let plan = make_batch_plan(tokens.len(), 1, BatchMode::Eval, 0)?;
    let mut state = model.zero_state(1);
    let mut hooks = EvalHooks {
        masks: masks.to_vec(),
        ..Default::default()
    };
    let mut records = Vec::with_capacity(tokens.len().saturating_sub(1));
    for w in &plan.windows {
        let tw = extract_window(tokens, &plan, *w)?;
        let losses = model.eval_window(&tw, &mut state, &mut hooks)?;
        for (t, &nll) in losses.iter().enumerate() {
            let position = w.offset + t + 1;
            let token = tokens[position];
            records.push(LossRecord {
                position,
                token,
                nll,
                bin: bins[token as usize],
            });
        }
    }
    Ok(records)
}

/// exp(mean NLL) over records.
pub fn perplexity(records: &[LossRecord]) -> f64 {
    let n = records.len();
    if n == 0 {
        return f64::NAN;
    }
    (records.iter().map(|r| r.nll).sum::<f64>() / n as f64).exp()
}

/// Per-bin perplexity: exp(mean NLL restricted to the bin); `None` for
/// empty bins.
pub fn perplexity_by_bin(records: &[LossRecord]) -> [Option<f64>; 4] {
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for r in records {
        sums[r.bin.index()] += r.nll;
        counts[r.bin.index()] += 1;
    }
    let mut out = [None; 4];
    for i in 0..4 {
        if counts[i] > 0 {
            out[i] = Some((sums[i] / counts[i] as f64).exp());
        }
    }
    out
}
