use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optimizer::{nt_asgd_trigger, SgdAsgd, SgdAsgdConfig};
use super::EpochLog;
use crate::corpus::{extract_window, make_batch_plan, BatchMode, CorpusBundle};
use crate::model::{EvalHooks, LanguageModel, RngState, TrainerSnapshot};
use crate::{Error, Result};

pub struct TrainLmResult {
    /// Best-validation parameters (the averaged view once triggered).
    pub model: LanguageModel,
    pub log: Vec<EpochLog>,
    pub best_valid_loss: f64,
    pub trigger_step: Option<u64>,
    pub trainer: TrainerSnapshot,
}

/// Mean per-token negative log-likelihood over a stateful evaluation pass
/// (length-70 windows, state carried within each stream).
pub fn mean_eval_loss(model: &LanguageModel, tokens: &[u32], batch: usize) -> Result<f64> {
    let plan = make_batch_plan(tokens.len(), batch, BatchMode::Eval, 0)?;
    let mut state = model.zero_state(batch);
    let mut hooks = EvalHooks::default();
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in &plan.windows {
        let tw = extract_window(tokens, &plan, *w)?;
        let losses = model.eval_window(&tw, &mut state, &mut hooks)?;
        sum += losses.iter().sum::<f64>();
        count += losses.len();
    }
    Ok(sum / count as f64)
}

fn capture_params(model: &LanguageModel) -> Vec<Vec<f64>> {
    model
        .param_views()
        .iter()
        .map(|p| p.values.to_vec())
        .collect()
}

fn restore_params(model: &mut LanguageModel, saved: &[Vec<f64>]) {
    for (p, s) in model.param_muts().into_iter().zip(saved) {
        p.values.copy_from_slice(s);
    }
}

/// Writes averaged buffers over the current parameters; frozen buffers
/// (empty average slots) stay put.
fn overlay_averages(model: &mut LanguageModel, averages: &[Vec<f64>]) {
    for (p, a) in model.param_muts().into_iter().zip(averages) {
        if !a.is_empty() {
            p.values.copy_from_slice(a);
        }
    }
}

/// Stateful training with NT-ASGD: plain SGD until the validation loss
/// stops improving over the non-monotone window, then running parameter
/// averages take over as the reported weights. Keeps the best-validation
/// parameters.
pub fn train_lm(
    mut model: LanguageModel,
    corpus: &CorpusBundle,
    cfg: &SgdAsgdConfig,
    seed: u64,
) -> Result<TrainLmResult> {
    corpus.validate()?;
    if corpus.vocab.len() != model.config.vocab_size {
        return Err(Error::ShapeMismatch {
            context: "train_lm vocabulary",
            expected: format!("{}", model.config.vocab_size),
            got: format!("{}", corpus.vocab.len()),
        });
    }
    let names: Vec<String> = model.param_views().iter().map(|p| p.name.clone()).collect();
    let layout: Vec<usize> = model.param_views().iter().map(|p| p.values.len()).collect();
    let frozen: Vec<bool> = model.param_views().iter().map(|p| p.frozen).collect();

    let mut opt = SgdAsgd::new(cfg.clone());
    let mut grads = model.zero_grads();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<f64> = Vec::new();
    let mut best_valid = f64::INFINITY;
    let mut best_params: Option<Vec<Vec<f64>>> = None;
    let mut log = Vec::new();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let plan_seed: u64 = rng.random();
        let plan = make_batch_plan(corpus.train.len(), cfg.batch_size, BatchMode::Train, plan_seed)?;
        let mut state = model.zero_state(cfg.batch_size);
        let mut loss_sum = 0.0;
        let mut tokens = 0usize;
        for w in &plan.windows {
            let tw = extract_window(&corpus.train, &plan, *w)?;
            grads.zero();
            let (ls, n) = model.train_window(&tw, &mut state, &mut grads)?;
            let mut params = model.param_muts();
            opt.step(&mut params, &grads.grad_views())?;
            loss_sum += ls;
            tokens += n;
        }
        let train_loss = loss_sum / tokens as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "training loss became non-finite in epoch {epoch}"
            )));
        }

        // Validate the parameters a user would get right now: the running
        // average once triggered, the raw weights before.
        let valid_loss = match opt.averaged_params() {
            Some(avgs) => {
                let saved = capture_params(&model);
                overlay_averages(&mut model, avgs);
                let v = mean_eval_loss(&model, &corpus.valid, cfg.valid_batch)?;
                restore_params(&mut model, &saved);
                v
            }
            None => mean_eval_loss(&model, &corpus.valid, cfg.valid_batch)?,
        };
        if !valid_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "validation loss became non-finite in epoch {epoch}"
            )));
        }

        if valid_loss < best_valid {
            best_valid = valid_loss;
            let mut snap = capture_params(&model);
            if let Some(avgs) = opt.averaged_params() {
                for (s, a) in snap.iter_mut().zip(avgs) {
                    if !a.is_empty() {
                        s.copy_from_slice(a);
                    }
                }
            }
            best_params = Some(snap);
        }

        history.push(valid_loss);
        if !opt.averaging_active() && nt_asgd_trigger(&history, cfg.nonmono) {
            opt.start_averaging(&layout, &frozen);
        }

        log.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
            lr: cfg.lr,
            asgd_triggered: opt.averaging_active(),
            wallclock_s: started.elapsed().as_secs_f64(),
        });
    }

    if let Some(bp) = &best_params {
        restore_params(&mut model, bp);
    }
    let (scalars, buffers) = opt.snapshot(&names);
    let trainer = TrainerSnapshot {
        kind: "sgd-asgd".into(),
        step: opt.step_count,
        scalars,
        rng: RngState::from_word_pos(seed, rng.get_stream(), rng.get_word_pos()),
        buffers,
    };
    Ok(TrainLmResult {
        model,
        log,
        best_valid_loss: best_valid,
        trigger_step: opt.triggered_at_step,
        trainer,
    })
}
