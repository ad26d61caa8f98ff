use crate::corpus::{extract_window, make_batch_plan, BatchMode};
use crate::model::{EvalHooks, LanguageModel};
use crate::timescale::{estimate_timescale, GateTrace};
use crate::{Error, Result};

/// Units averaged per heat-map row.
const HEATMAP_GROUP: usize = 10;

/// Forget-gate traces of one layer over an evaluated token stream, plus
/// the sorted 10-unit-averaged heat map used for visualization.
#[derive(Debug, Clone)]
pub struct GateTraceSet {
    pub layer: usize,
    pub n_sequences: usize,
    pub n_steps: usize,
    pub per_unit: Vec<GateTrace>,
    /// Rows: groups of 10 consecutive units after sorting by mean gate
    /// value (ascending); columns: steps, averaged over sequences.
    pub heatmap: Vec<Vec<f64>>,
}

impl GateTraceSet {
    /// Estimated timescale per unit, in unit order.
    pub fn estimated_timescales(&self) -> Result<Vec<f64>> {
        self.per_unit.iter().map(estimate_timescale).collect()
    }
}

/// Runs a stateful evaluation pass (batch 1, fixed-length windows) and
/// collects per-unit forget-gate values of `layer`. Each full window is one
/// trace "sequence" of `window_len` steps; the short final window is
/// dropped to keep the N×K rectangle.
pub fn collect_gate_traces(
    model: &LanguageModel,
    tokens: &[u32],
    layer: usize,
    window_len: usize,
) -> Result<GateTraceSet> {
    if layer >= model.n_layers() {
        return Err(Error::InvalidParameter {
            name: "layer",
            reason: format!("layer {layer} out of range ({} layers)", model.n_layers()),
        });
    }
    if window_len == 0 {
        return Err(Error::InvalidParameter {
            name: "window_len",
            reason: "must be positive".into(),
        });
    }
    let hidden = model.layers[layer].hidden_size;
    let plan = make_batch_plan(tokens.len(), 1, BatchMode::Eval, 0)?;
    let mut state = model.zero_state(1);
    // Gate rows in stream order; chunked into sequences afterwards.
    let mut gate_rows: Vec<Vec<f64>> = Vec::new();
    for w in &plan.windows {
        let tw = extract_window(tokens, &plan, *w)?;
        let mut hooks = EvalHooks {
            gate_layer: Some(layer),
            ..Default::default()
        };
        model.eval_window(&tw, &mut state, &mut hooks)?;
        for g in hooks.gates {
            gate_rows.push(g.row(0).to_vec());
        }
    }
    let n_sequences = gate_rows.len() / window_len;
    if n_sequences == 0 {
        return Err(Error::EmptyInput(
            "token stream too short for a single trace window",
        ));
    }
    let n_steps = window_len;
    let mut per_unit = Vec::with_capacity(hidden);
    for u in 0..hidden {
        let mut values = Vec::with_capacity(n_sequences * n_steps);
        for j in 0..n_sequences {
            for t in 0..n_steps {
                values.push(gate_rows[j * n_steps + t][u]);
            }
        }
        per_unit.push(GateTrace::new(u, n_sequences, n_steps, values)?);
    }

    // Heat map: sequence-averaged gate value per (unit, step), units sorted
    // by overall mean, then averaged in groups of 10.
    let mut unit_step_mean = vec![vec![0.0f64; n_steps]; hidden];
    for (u, row) in unit_step_mean.iter_mut().enumerate() {
        for j in 0..n_sequences {
            for (t, v) in row.iter_mut().enumerate() {
                *v += gate_rows[j * n_steps + t][u];
            }
        }
        row.iter_mut().for_each(|v| *v /= n_sequences as f64);
    }
    let mut order: Vec<usize> = (0..hidden).collect();
    order.sort_by(|&a, &b| {
        per_unit[a]
            .mean()
            .partial_cmp(&per_unit[b].mean())
            .unwrap()
    });
    let mut heatmap = Vec::new();
    for chunk in order.chunks(HEATMAP_GROUP) {
        let mut row = vec![0.0f64; n_steps];
        for &u in chunk {
            for (t, v) in row.iter_mut().enumerate() {
                *v += unit_step_mean[u][t];
            }
        }
        row.iter_mut().for_each(|v| *v /= chunk.len() as f64);
        heatmap.push(row);
    }

    Ok(GateTraceSet {
        layer,
        n_sequences,
        n_steps,
        per_unit,
        heatmap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_lm, LayerTimescales, LmConfig};
    use approx::assert_relative_eq;

    fn model_with(layer_modes: Vec<LayerTimescales>, sizes: Vec<usize>) -> LanguageModel {
        let cfg = LmConfig {
            vocab_size: 17,
            embed_dim: *sizes.last().unwrap(),
            layer_sizes: sizes,
            layer_timescales: layer_modes,
            tie_embeddings: true,
            embed_init_range: 0.1,
        };
        build_lm(&cfg, 11).unwrap()
    }

    #[test]
    fn constant_gate_stub_gives_uniform_estimates() {
        // Zero weights and biases: every forget gate sits at exactly 0.5,
        // so every unit estimates T = 1/ln 2.
        let mut model = model_with(
            vec![LayerTimescales::Trainable, LayerTimescales::Trainable],
            vec![6, 8],
        );
        for p in model.param_muts() {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let tokens: Vec<u32> = (0..200u32).map(|i| i % 17).collect();
        let set = collect_gate_traces(&model, &tokens, 0, 70).unwrap();
        for t in set.estimated_timescales().unwrap() {
            assert_relative_eq!(t, std::f64::consts::LOG2_E, max_relative = 1e-12);
        }
    }

    #[test]
    fn trace_shape_is_units_by_sequences_by_steps() {
        let model = model_with(
            vec![LayerTimescales::Trainable, LayerTimescales::Trainable],
            vec![6, 8],
        );
        // 250 tokens, batch 1 → 249 predictable → 3 full 70-step windows.
        let tokens: Vec<u32> = (0..250u32).map(|i| (i * 3) % 17).collect();
        let set = collect_gate_traces(&model, &tokens, 1, 70).unwrap();
        assert_eq!(set.per_unit.len(), 8);
        assert_eq!(set.n_sequences, 3);
        assert_eq!(set.n_steps, 70);
        for tr in &set.per_unit {
            assert_eq!(tr.values().len(), 3 * 70);
        }
        // Heat map groups of 10: 8 units → one partial row.
        assert_eq!(set.heatmap.len(), 1);
        assert_eq!(set.heatmap[0].len(), 70);
    }

    #[test]
    fn long_timescale_units_saturate_their_gates() {
        // A frozen layer holding very long assigned timescales keeps mean
        // forget gates near 1.
        let model = model_with(
            vec![
                LayerTimescales::Fixed {
                    timescales: vec![300.0, 400.0, 500.0, 600.0, 800.0, 1000.0],
                },
                LayerTimescales::Trainable,
            ],
            vec![6, 8],
        );
        let tokens: Vec<u32> = (0..300u32).map(|i| (i * 5) % 17).collect();
        let set = collect_gate_traces(&model, &tokens, 0, 70).unwrap();
        for tr in &set.per_unit {
            assert!(tr.mean() > 0.99, "unit {} mean {}", tr.unit(), tr.mean());
        }
    }

    #[test]
    fn layer_out_of_range_rejected() {
        let model = model_with(
            vec![LayerTimescales::Trainable, LayerTimescales::Trainable],
            vec![6, 8],
        );
        let tokens: Vec<u32> = (0..100u32).map(|i| i % 17).collect();
        assert!(collect_gate_traces(&model, &tokens, 5, 70).is_err());
    }
}
