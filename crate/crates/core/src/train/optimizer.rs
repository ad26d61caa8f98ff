use serde::{Deserialize, Serialize};

use crate::model::{GradView, ParamMut};
use crate::{Error, Result};

/// SGD + non-monotonically-triggered averaging configuration.
///
/// Learning rate, clipping, and batch sizes are artifact choices
/// (conventional for this architecture family), not quantities the
/// timescale theory prescribes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdAsgdConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    /// Non-monotone window n: averaging starts once the current validation
    /// loss exceeds the best seen more than n evaluations ago.
    pub nonmono: usize,
    pub batch_size: usize,
    pub valid_batch: usize,
}

impl Default for SgdAsgdConfig {
    fn default() -> Self {
        SgdAsgdConfig {
            lr: 20.0,
            weight_decay: 0.0,
            clip_norm: 0.25,
            epochs: 1000,
            nonmono: 5,
            batch_size: 20,
            valid_batch: 1,
        }
    }
}

/// Adam configuration; defaults match the Dyck training recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 2000,
        }
    }
}

/// Non-monotone trigger over a validation-loss history that includes the
/// current (last) entry: fires once at least n+1 prior evaluations exist
/// and the current loss is worse than the best of everything except the
/// most recent n.
pub fn nt_asgd_trigger(history: &[f64], n: usize) -> bool {
    if history.len() < n + 2 {
        return false;
    }
    let current = *history.last().unwrap();
    let cutoff = history.len() - 1 - n;
    let best = history[..cutoff]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    current > best
}

/// Bitwise checksum of the frozen buffers; optimizers verify it before and
/// after every step.
fn frozen_checksum(params: &[ParamMut<'_>]) -> u64 {
    let mut acc = 0u64;
    for p in params.iter().filter(|p| p.frozen) {
        for v in p.values.iter() {
            acc = acc.rotate_left(7) ^ v.to_bits();
        }
    }
    acc
}

fn check_grads(params: &[ParamMut<'_>], grads: &[GradView<'_>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch {
            context: "optimizer step",
            expected: format!("{} buffers", params.len()),
            got: format!("{}", grads.len()),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.values.len() != g.values.len() {
            return Err(Error::ShapeMismatch {
                context: "optimizer step buffer",
                expected: format!("{} ({})", p.values.len(), p.name),
                got: format!("{}", g.values.len()),
            });
        }
        if !p.frozen && g.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
    }
    Ok(())
}

/// SGD with global-norm clipping, weight decay, and running parameter
/// averages once triggered. Frozen buffers are excluded from the update,
/// the decay, the clip norm, and the averages entirely.
#[derive(Debug, Clone)]
pub struct SgdAsgd {
    pub cfg: SgdAsgdConfig,
    pub step_count: u64,
    pub triggered_at_step: Option<u64>,
    avg_count: u64,
    /// One entry per parameter buffer; empty vectors for frozen buffers.
    averages: Option<Vec<Vec<f64>>>,
}

impl SgdAsgd {
    pub fn new(cfg: SgdAsgdConfig) -> Self {
        SgdAsgd {
            cfg,
            step_count: 0,
            triggered_at_step: None,
            avg_count: 0,
            averages: None,
        }
    }

    pub fn averaging_active(&self) -> bool {
        self.averages.is_some()
    }

    /// Begins averaging post-step parameters; idempotent.
    pub fn start_averaging(&mut self, layout: &[usize], frozen: &[bool]) {
        if self.averages.is_none() {
            self.triggered_at_step = Some(self.step_count);
            self.avg_count = 0;
            self.averages = Some(
                layout
                    .iter()
                    .zip(frozen)
                    .map(|(&len, &fr)| if fr { Vec::new() } else { vec![0.0; len] })
                    .collect(),
            );
        }
    }

    /// Arithmetic mean of post-step parameters since the trigger; `None`
    /// before triggering or before the first averaged step.
    pub fn averaged_params(&self) -> Option<&[Vec<f64>]> {
        if self.avg_count == 0 {
            return None;
        }
        self.averages.as_deref()
    }

    pub fn step(&mut self, params: &mut [ParamMut<'_>], grads: &[GradView<'_>]) -> Result<()> {
        check_grads(params, grads)?;
        let frozen_before = frozen_checksum(params);

        let mut sq_norm = 0.0;
        for (p, g) in params.iter().zip(grads) {
            if p.frozen {
                continue;
            }
            for v in g.values {
                sq_norm += v * v;
            }
        }
        let norm = sq_norm.sqrt();
        let factor = if norm > self.cfg.clip_norm && norm > 0.0 {
            self.cfg.clip_norm / norm
        } else {
            1.0
        };

        for (p, g) in params.iter_mut().zip(grads) {
            if p.frozen {
                continue;
            }
            for (w, gv) in p.values.iter_mut().zip(g.values) {
                *w -= self.cfg.lr * (gv * factor + self.cfg.weight_decay * *w);
            }
        }
        self.step_count += 1;

        if let Some(avgs) = &mut self.averages {
            self.avg_count += 1;
            let k = self.avg_count as f64;
            for (avg, p) in avgs.iter_mut().zip(params.iter()) {
                if p.frozen {
                    continue;
                }
                for (a, &w) in avg.iter_mut().zip(p.values.iter()) {
                    *a += (w - *a) / k;
                }
            }
        }

        assert_eq!(
            frozen_checksum(params),
            frozen_before,
            "frozen buffer mutated during optimizer step"
        );
        Ok(())
    }

    /// (scalars, buffers) for checkpointing.
    pub fn snapshot(&self, names: &[String]) -> (serde_json::Value, Vec<(String, Vec<f64>)>) {
        let scalars = serde_json::json!({
            "step_count": self.step_count,
            "triggered_at_step": self.triggered_at_step,
            "avg_count": self.avg_count,
        });
        let buffers = match &self.averages {
            None => Vec::new(),
            Some(avgs) => avgs
                .iter()
                .zip(names)
                .filter(|(a, _)| !a.is_empty())
                .map(|(a, n)| (format!("trainer.avg.{n}"), a.clone()))
                .collect(),
        };
        (scalars, buffers)
    }
}

/// Bias-corrected Adam. Frozen buffers get no moment state at all.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    fn ensure_state(&mut self, params: &[ParamMut<'_>]) {
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|p| if p.frozen { Vec::new() } else { vec![0.0; p.values.len()] })
                .collect();
            self.v = self.m.clone();
        }
    }

    pub fn step(&mut self, params: &mut [ParamMut<'_>], grads: &[GradView<'_>]) -> Result<()> {
        check_grads(params, grads)?;
        self.ensure_state(params);
        let frozen_before = frozen_checksum(params);
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.frozen {
                continue;
            }
            for i in 0..p.values.len() {
                let gv = g.values[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gv;
                v[i] = b2 * v[i] + (1.0 - b2) * gv * gv;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.values[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        assert_eq!(
            frozen_checksum(params),
            frozen_before,
            "frozen buffer mutated during optimizer step"
        );
        Ok(())
    }

    pub fn snapshot(&self, names: &[String]) -> (serde_json::Value, Vec<(String, Vec<f64>)>) {
        let scalars = serde_json::json!({ "t": self.t });
        let mut buffers = Vec::new();
        for (m, n) in self.m.iter().zip(names) {
            if !m.is_empty() {
                buffers.push((format!("trainer.m.{n}"), m.clone()));
            }
        }
        for (v, n) in self.v.iter().zip(names) {
            if !v.is_empty() {
                buffers.push((format!("trainer.v.{n}"), v.clone()));
            }
        }
        (scalars, buffers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pm<'a>(name: &str, frozen: bool, values: &'a mut [f64]) -> ParamMut<'a> {
        ParamMut {
            name: name.into(),
            frozen,
            values,
        }
    }

    fn gv<'a>(name: &str, values: &'a [f64]) -> GradView<'a> {
        GradView {
            name: name.into(),
            values,
        }
    }

    #[test]
    fn plain_sgd_update() {
        // w = 1, g = 0.5, lr = 0.1, no decay, clip off → 0.95.
        let mut w = [1.0];
        let g = [0.5];
        let mut opt = SgdAsgd::new(SgdAsgdConfig {
            lr: 0.1,
            weight_decay: 0.0,
            clip_norm: 1e9,
            ..Default::default()
        });
        opt.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
        assert_relative_eq!(w[0], 0.95, max_relative = 1e-15);
    }

    #[test]
    fn global_norm_clip_scales_gradient() {
        // ‖g‖ = 10, clip 1 → effective g × 0.1.
        let mut w = [0.0, 0.0];
        let g = [6.0, 8.0];
        let mut opt = SgdAsgd::new(SgdAsgdConfig {
            lr: 1.0,
            weight_decay: 0.0,
            clip_norm: 1.0,
            ..Default::default()
        });
        opt.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
        assert_relative_eq!(w[0], -0.6, max_relative = 1e-12);
        assert_relative_eq!(w[1], -0.8, max_relative = 1e-12);
    }

    #[test]
    fn frozen_buffers_are_untouched_by_both_optimizers() {
        let mut wf = [3.25, -3.25];
        let g = [10.0, -10.0];
        let mut opt = SgdAsgd::new(SgdAsgdConfig::default());
        opt.step(&mut [pm("b_f", true, &mut wf)], &[gv("b_f", &g)]).unwrap();
        assert_eq!(wf, [3.25, -3.25]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [pm("b_f", true, &mut wf)], &[gv("b_f", &g)]).unwrap();
        assert_eq!(wf, [3.25, -3.25]);
        // Frozen gradients may even be non-finite; they are never read.
        let bad = [f64::NAN, 0.0];
        opt.step(&mut [pm("b_f", true, &mut wf)], &[gv("b_f", &bad)]).unwrap();
        assert_eq!(wf, [3.25, -3.25]);
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let mut w = [1.0];
        let g = [f64::INFINITY];
        let mut opt = SgdAsgd::new(SgdAsgdConfig::default());
        assert!(matches!(
            opt.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(w, [1.0]);
    }

    #[test]
    fn trigger_rule_worked_examples() {
        // Strictly decreasing history never triggers.
        assert!(!nt_asgd_trigger(&[5.0, 4.0, 3.0, 2.0, 1.0, 0.9, 0.8], 5));
        // len 7, n 5: compare 2.0 against min of first 1 entry = 5 → false.
        assert!(!nt_asgd_trigger(&[5.0, 4.0, 3.0, 2.0, 1.0, 0.9, 2.0], 5));
        // len 8, n 5: compare 1.01 against min(1.0, 0.9) = 0.9 → true.
        assert!(nt_asgd_trigger(
            &[1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.01],
            5
        ));
        // Too short to have n+1 prior evaluations.
        assert!(!nt_asgd_trigger(&[1.0, 2.0], 5));
    }

    #[test]
    fn averaging_matches_direct_mean_on_toy_run() {
        // Two parameters under constant gradient; averaged parameters must
        // equal the mean of post-step values from the trigger on.
        let mut w = [1.0, -2.0];
        let g = [0.1, -0.2];
        let mut opt = SgdAsgd::new(SgdAsgdConfig {
            lr: 0.5,
            weight_decay: 0.0,
            clip_norm: 1e9,
            ..Default::default()
        });
        let mut post_steps: Vec<[f64; 2]> = Vec::new();
        for step in 0..10 {
            if step == 4 {
                opt.start_averaging(&[2], &[false]);
            }
            opt.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
            if step >= 4 {
                post_steps.push(w);
            }
        }
        let avg = opt.averaged_params().unwrap();
        for k in 0..2 {
            let direct: f64 =
                post_steps.iter().map(|s| s[k]).sum::<f64>() / post_steps.len() as f64;
            assert_relative_eq!(avg[0][k], direct, max_relative = 1e-12);
        }
        assert_eq!(opt.triggered_at_step, Some(4));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // First step with g = 1: bias-corrected update ≈ -lr.
        let mut w = [0.0];
        let g = [1.0];
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
        assert_relative_eq!(w[0], -1e-4, max_relative = 1e-6);
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut w = [0.7];
        let g = [0.0];
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
        assert_eq!(w, [0.7]);
    }

    #[test]
    fn adam_two_steps_match_hand_computed_moments() {
        let cfg = AdamConfig::default();
        let mut w = [0.0];
        let g = [2.0];
        let mut adam = Adam::new(cfg.clone());
        adam.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
        adam.step(&mut [pm("w", false, &mut w)], &[gv("w", &g)]).unwrap();
        // Closed form with constant gradient: m̂ = g, v̂ = g² each step.
        let expected = -(cfg.lr * 2.0 / (2.0f64.powi(2).sqrt() + cfg.eps)) * 2.0;
        assert_relative_eq!(w[0], expected, max_relative = 1e-9);
    }
}
