use crate::corpus::{TokenWindow, Vocab};
use crate::mathkernel::Matrix;
use crate::model::{EvalHooks, LanguageModel};
use crate::{Error, Result};

/// How the ablated word is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordAblationPolicy {
    /// Replace the token with `<unk>`.
    ReplaceWithUnk,
    /// Feed a zero embedding at the ablated position.
    ZeroEmbedding,
}

/// Decay curve of one unit group (layer-2 style grouping by assigned
/// timescale).
#[derive(Debug, Clone)]
pub struct GroupCurve {
    pub mean_timescale: f64,
    pub values: Vec<f64>,
}

/// Normalized cell-state difference curves after a word ablation.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub ablate_pos: usize,
    /// `per_layer[l][tau]` = mean over sentences of
    /// ‖c(t0+τ) - c'(t0+τ)‖₂ normalized to 1 at τ = 0.
    pub per_layer: Vec<Vec<f64>>,
    /// Optional per-group curves for one layer's units partitioned by
    /// assigned timescale.
    pub per_group: Option<Vec<GroupCurve>>,
}

fn forward_cells(
    model: &LanguageModel,
    tokens: &[u32],
    zero_embed_step: Option<usize>,
) -> Result<Vec<Vec<Matrix>>> {
    // Fabricated targets: losses are discarded, only cell states matter.
    let window = TokenWindow {
        steps: tokens.len(),
        batch: 1,
        inputs: tokens.to_vec(),
        targets: vec![0; tokens.len()],
    };
    let mut state = model.zero_state(1);
    let mut hooks = EvalHooks {
        record_cells: true,
        zero_embed_steps: zero_embed_step.into_iter().collect(),
        ..Default::default()
    };
    model.eval_window(&window, &mut state, &mut hooks)?;
    Ok(hooks.cells)
}

fn l2_diff(a: &Matrix, b: &Matrix, units: Option<&[usize]>) -> f64 {
    match units {
        None => a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Some(us) => us
            .iter()
            .map(|&u| {
                let d = a.get(0, u) - b.get(0, u);
                d * d
            })
            .sum::<f64>()
            .sqrt(),
    }
}

/// Runs every sentence through the intact model and through a copy with
/// the word at `ablate_pos` removed, then reports how the cell-state
/// difference decays with distance from the ablation. Curves are
/// normalized per sentence at τ = 0 and averaged; τ runs to the shortest
/// sentence's end.
///
/// `group_layer` requests per-group curves: that layer's units are sorted
/// by assigned timescale and partitioned into `group_size`-unit groups.
pub fn word_ablation_decay(
    model: &LanguageModel,
    sentences: &[Vec<u32>],
    ablate_pos: usize,
    policy: WordAblationPolicy,
    vocab: &Vocab,
    group_layer: Option<(usize, usize)>,
) -> Result<DecayReport> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("word ablation sentences"));
    }
    for (i, s) in sentences.iter().enumerate() {
        if s.len() <= ablate_pos + 1 {
            return Err(Error::InvalidParameter {
                name: "sentences",
                reason: format!(
                    "sentence {i} has {} tokens, need more than {}",
                    s.len(),
                    ablate_pos + 1
                ),
            });
        }
        if policy == WordAblationPolicy::ReplaceWithUnk && s[ablate_pos] == vocab.unk_id() {
            return Err(Error::DegenerateAblation(format!(
                "sentence {i} already has <unk> at position {ablate_pos}; replacement changes nothing"
            )));
        }
    }
    let tau_max = sentences.iter().map(|s| s.len()).min().unwrap() - ablate_pos - 1;
    let n_layers = model.n_layers();

    let groups: Option<Vec<(f64, Vec<usize>)>> = match group_layer {
        None => None,
        Some((layer, group_size)) => {
            if layer >= n_layers {
                return Err(Error::InvalidParameter {
                    name: "group_layer",
                    reason: format!("layer {layer} out of range"),
                });
            }
            let spec = model.specs[layer]
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter {
                    name: "group_layer",
                    reason: format!("layer {layer} has no assigned timescales"),
                })?;
            let ts = spec.timescales();
            let mut order: Vec<usize> = (0..ts.len()).collect();
            order.sort_by(|&a, &b| ts[a].partial_cmp(&ts[b]).unwrap());
            Some(
                order
                    .chunks(group_size.max(1))
                    .map(|chunk| {
                        let mean =
                            chunk.iter().map(|&u| ts[u]).sum::<f64>() / chunk.len() as f64;
                        (mean, chunk.to_vec())
                    })
                    .collect(),
            )
        }
    };

    let mut layer_acc = vec![vec![0.0f64; tau_max + 1]; n_layers];
    let mut group_acc: Option<Vec<Vec<f64>>> = groups
        .as_ref()
        .map(|gs| vec![vec![0.0f64; tau_max + 1]; gs.len()]);

    for sentence in sentences {
        let intact = forward_cells(model, sentence, None)?;
        let ablated = match policy {
            WordAblationPolicy::ReplaceWithUnk => {
                let mut modified = sentence.clone();
                modified[ablate_pos] = vocab.unk_id();
                forward_cells(model, &modified, None)?
            }
            WordAblationPolicy::ZeroEmbedding => forward_cells(model, sentence, Some(ablate_pos))?,
        };
        for l in 0..n_layers {
            let base = l2_diff(&intact[l][ablate_pos], &ablated[l][ablate_pos], None);
            if base == 0.0 {
                return Err(Error::DegenerateAblation(format!(
                    "ablation produced identical layer-{l} cell states at the ablated position"
                )));
            }
            for tau in 0..=tau_max {
                let d = l2_diff(
                    &intact[l][ablate_pos + tau],
                    &ablated[l][ablate_pos + tau],
                    None,
                );
                layer_acc[l][tau] += d / base;
            }
        }
        if let (Some(gs), Some(acc)) = (&groups, &mut group_acc) {
            let (layer, _) = group_layer.unwrap();
            for (gi, (_, units)) in gs.iter().enumerate() {
                let base = l2_diff(
                    &intact[layer][ablate_pos],
                    &ablated[layer][ablate_pos],
                    Some(units),
                );
                if base == 0.0 {
                    return Err(Error::DegenerateAblation(format!(
                        "group {gi} has zero cell-state difference at the ablated position"
                    )));
                }
                for tau in 0..=tau_max {
                    let d = l2_diff(
                        &intact[layer][ablate_pos + tau],
                        &ablated[layer][ablate_pos + tau],
                        Some(units),
                    );
                    acc[gi][tau] += d / base;
                }
            }
        }
    }

    let n = sentences.len() as f64;
    for row in &mut layer_acc {
        row.iter_mut().for_each(|v| *v /= n);
    }
    let per_group = match (groups, group_acc) {
        (Some(gs), Some(mut acc)) => Some(
            gs.into_iter()
                .zip(acc.drain(..))
                .map(|((mean_timescale, _), mut values)| {
                    values.iter_mut().for_each(|v| *v /= n);
                    GroupCurve {
                        mean_timescale,
                        values,
                    }
                })
                .collect(),
        ),
        _ => None,
    };
    Ok(DecayReport {
        ablate_pos,
        per_layer: layer_acc,
        per_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, EosPolicy};
    use crate::model::{build_lm, LayerTimescales, LmConfig};
    use crate::timescale::forget_bias;
    use approx::assert_relative_eq;

    fn fixture_vocab(n: usize) -> Vocab {
        let mut text = String::new();
        for i in 0..n - 2 {
            text.push_str(&format!("v{i} "));
        }
        text.push('\n');
        load_corpus(&text, "", "", EosPolicy::AppendEos)
            .unwrap()
            .vocab
    }

    #[test]
    fn curves_start_at_one_by_construction() {
        let cfg = LmConfig {
            vocab_size: 10,
            embed_dim: 5,
            layer_sizes: vec![6, 5],
            layer_timescales: vec![LayerTimescales::Trainable, LayerTimescales::Trainable],
            tie_embeddings: true,
            embed_init_range: 0.1,
        };
        let model = build_lm(&cfg, 3).unwrap();
        let vocab = fixture_vocab(10);
        let sentences: Vec<Vec<u32>> = (0..4)
            .map(|s| (0..30u32).map(|i| (i * 3 + s) % 10).collect())
            .collect();
        let report = word_ablation_decay(
            &model,
            &sentences,
            5,
            WordAblationPolicy::ReplaceWithUnk,
            &vocab,
            None,
        )
        .unwrap();
        for layer in &report.per_layer {
            assert_relative_eq!(layer[0], 1.0, max_relative = 1e-12);
        }
        assert_eq!(report.per_layer[0].len(), 30 - 5);
    }

    #[test]
    fn unk_at_ablation_position_is_degenerate() {
        let cfg = LmConfig {
            vocab_size: 10,
            embed_dim: 5,
            layer_sizes: vec![4, 5],
            layer_timescales: vec![LayerTimescales::Trainable, LayerTimescales::Trainable],
            tie_embeddings: true,
            embed_init_range: 0.1,
        };
        let model = build_lm(&cfg, 4).unwrap();
        let vocab = fixture_vocab(10);
        let unk = vocab.unk_id();
        let sentences = vec![vec![1, 2, unk, 3, 4, 5, 6, 7]];
        assert!(matches!(
            word_ablation_decay(
                &model,
                &sentences,
                2,
                WordAblationPolicy::ReplaceWithUnk,
                &vocab,
                None
            ),
            Err(Error::DegenerateAblation(_))
        ));
    }

    #[test]
    fn single_unit_free_decay_matches_forget_gate_power() {
        // One unit, fixed forget bias, all couplings silenced after t0:
        // curve(τ) = f^τ exactly (the cell difference decays by f each
        // step while the candidate path contributes nothing).
        let cfg = LmConfig {
            vocab_size: 4,
            embed_dim: 1,
            layer_sizes: vec![1],
            layer_timescales: vec![LayerTimescales::Trainable],
            tie_embeddings: true,
            embed_init_range: 0.1,
        };
        let mut model = build_lm(&cfg, 5).unwrap();
        let t_desired = 5.0;
        let bf = forget_bias(t_desired).unwrap();
        {
            let mut params = model.param_muts();
            for p in params.iter_mut() {
                p.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        model.layers[0].b_f = vec![bf];
        // Embedding row for token 1 is nonzero so the ablated word changes
        // the cell; all other rows stay zero so later steps are free.
        model.embedding.set(1, 0, 1.0);
        model.layers[0].w_cx.fill(0.8);
        let vocab = fixture_vocab(4);
        // Token 1 at the ablated position, zeros elsewhere.
        let sentence: Vec<u32> = vec![0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0];
        let report = word_ablation_decay(
            &model,
            &[sentence],
            2,
            WordAblationPolicy::ZeroEmbedding,
            &vocab,
            None,
        )
        .unwrap();
        let f = crate::mathkernel::sigmoid(bf);
        for (tau, v) in report.per_layer[0].iter().enumerate() {
            assert_relative_eq!(*v, f.powi(tau as i32), max_relative = 1e-10);
        }
    }

    #[test]
    fn per_group_curves_follow_assigned_timescales() {
        let cfg = LmConfig {
            vocab_size: 8,
            embed_dim: 4,
            layer_sizes: vec![4, 4],
            layer_timescales: vec![
                LayerTimescales::Fixed {
                    timescales: vec![1.0, 2.0, 30.0, 40.0],
                },
                LayerTimescales::Trainable,
            ],
            tie_embeddings: true,
            embed_init_range: 0.1,
        };
        let model = build_lm(&cfg, 6).unwrap();
        let vocab = fixture_vocab(8);
        let sentences: Vec<Vec<u32>> = (0..3)
            .map(|s| (0..25u32).map(|i| (i * 5 + s) % 8).collect())
            .collect();
        let report = word_ablation_decay(
            &model,
            &sentences,
            4,
            WordAblationPolicy::ReplaceWithUnk,
            &vocab,
            Some((0, 2)),
        )
        .unwrap();
        let groups = report.per_group.unwrap();
        assert_eq!(groups.len(), 2);
        assert!(groups[0].mean_timescale < groups[1].mean_timescale);
        // The long-timescale group holds its difference longer at the
        // middle of the horizon.
        let mid = groups[0].values.len() / 2;
        assert!(groups[1].values[mid] > groups[0].values[mid]);
    }
}
