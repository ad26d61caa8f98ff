use super::{evaluate_stream, perplexity, perplexity_by_bin, LossRecord};
use crate::analysis::collect_gate_traces;
use crate::corpus::Vocab;
use crate::model::{AblationMask, LanguageModel};
use crate::{Error, Result};

/// How units are ordered before grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortKey {
    /// By the layer's assigned timescales (requires a frozen layer).
    AssignedTimescale,
    /// By timescales estimated from forget-gate traces on the given
    /// tokens.
    EstimatedTimescale,
}

/// Effect of silencing one unit group.
#[derive(Debug, Clone)]
pub struct AblationGroup {
    pub index: usize,
    /// Mean sort-key timescale of the group's units.
    pub mean_timescale: f64,
    pub units: Vec<usize>,
    /// Ablated/intact perplexity per frequency bin; `None` for bins absent
    /// from the stream.
    pub per_bin_ratio: [Option<f64>; 4],
    pub overall_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub layer: usize,
    pub group_size: usize,
    pub groups: Vec<AblationGroup>,
    pub intact_perplexity: f64,
}

/// Evaluation with hidden-output ablation masks; empty `masks` is the
/// intact pass (bit-identical to [`super::evaluate_lm`]).
pub fn evaluate_lm_with_masks(
    model: &LanguageModel,
    tokens: &[u32],
    vocab: &Vocab,
    masks: &[AblationMask],
) -> Result<Vec<LossRecord>> {
    evaluate_stream(model, tokens, vocab, masks)
}

/// Sorts a layer's units by timescale, partitions them into consecutive
/// groups, and measures the per-bin perplexity ratio (ablated / intact)
/// when each group's hidden outputs are zeroed. The cell state keeps
/// evolving unless `zero_cell` requests the comparison variant that
/// clears it too.
pub fn ablate_and_route(
    model: &LanguageModel,
    tokens: &[u32],
    vocab: &Vocab,
    layer: usize,
    group_size: usize,
    sort_key: SortKey,
    zero_cell: bool,
) -> Result<AblationReport> {
    if layer >= model.n_layers() {
        return Err(Error::InvalidParameter {
            name: "layer",
            reason: format!("layer {layer} out of range"),
        });
    }
    let hidden = model.layers[layer].hidden_size;
    if group_size == 0 || group_size > hidden {
        return Err(Error::InvalidParameter {
            name: "group_size",
            reason: format!("group size {group_size} invalid for layer of {hidden} units"),
        });
    }
    if hidden % group_size != 0 {
        return Err(Error::InvalidParameter {
            name: "group_size",
            reason: format!("{hidden} units do not split into equal {group_size}-unit groups"),
        });
    }
    let timescales: Vec<f64> = match sort_key {
        SortKey::AssignedTimescale => model.specs[layer]
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter {
                name: "sort_key",
                reason: format!("layer {layer} has no assigned timescales"),
            })?
            .timescales()
            .to_vec(),
        SortKey::EstimatedTimescale => {
            let set = collect_gate_traces(model, tokens, layer, 70)?;
            set.estimated_timescales()?
        }
    };
    let mut order: Vec<usize> = (0..hidden).collect();
    order.sort_by(|&a, &b| timescales[a].partial_cmp(&timescales[b]).unwrap());

    let intact = evaluate_stream(model, tokens, vocab, &[])?;
    let intact_overall = perplexity(&intact);
    let intact_bins = perplexity_by_bin(&intact);

    let mut groups = Vec::new();
    for (index, chunk) in order.chunks(group_size).enumerate() {
        let units = chunk.to_vec();
        let mask = AblationMask {
            layer,
            units: units.clone(),
            zero_cell,
        };
        let ablated = evaluate_stream(model, tokens, vocab, std::slice::from_ref(&mask))?;
        let ablated_bins = perplexity_by_bin(&ablated);
        let mut per_bin_ratio = [None; 4];
        for i in 0..4 {
            if let (Some(a), Some(b)) = (ablated_bins[i], intact_bins[i]) {
                per_bin_ratio[i] = Some(a / b);
            }
        }
        let mean_timescale =
            units.iter().map(|&u| timescales[u]).sum::<f64>() / units.len() as f64;
        groups.push(AblationGroup {
            index,
            mean_timescale,
            units,
            per_bin_ratio,
            overall_ratio: perplexity(&ablated) / intact_overall,
        });
    }
    Ok(AblationReport {
        layer,
        group_size,
        groups,
        intact_perplexity: intact_overall,
    })
}
