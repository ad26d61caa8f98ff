use crate::dyck::DyckSequence;
use crate::model::DyckModel;
use crate::{Error, Result};

/// Whole-sequence accuracy within one max-pair-distance range.
#[derive(Debug, Clone)]
pub struct DistanceBucket {
    pub lo: usize,
    /// Exclusive upper edge; `None` for the open-ended last bucket.
    pub hi: Option<usize>,
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct DyckAccuracyReport {
    pub overall: f64,
    pub n_sequences: usize,
    /// Only buckets that contain sequences appear.
    pub buckets: Vec<DistanceBucket>,
}

/// A step is correct iff both thresholded sigmoid outputs match the target
/// pair; a sequence counts only when every step is correct. Sequences are
/// bucketed by their maximum matched-pair distance.
pub fn dyck_accuracy_by_timescale(
    model: &DyckModel,
    test: &[DyckSequence],
    bucket_edges: &[usize],
    threshold: f64,
) -> Result<DyckAccuracyReport> {
    if test.is_empty() {
        return Err(Error::EmptyInput("dyck test split"));
    }
    if bucket_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter {
            name: "bucket_edges",
            reason: "edges must be strictly increasing".into(),
        });
    }
    let n_buckets = bucket_edges.len() + 1;
    let mut totals = vec![0usize; n_buckets];
    let mut correct = vec![0usize; n_buckets];
    let mut overall_correct = 0usize;
    for seq in test {
        let preds = model.predict(&seq.symbols, threshold)?;
        let ok = preds == seq.targets;
        let bucket = bucket_edges
            .iter()
            .position(|&e| seq.max_distance < e)
            .unwrap_or(bucket_edges.len());
        totals[bucket] += 1;
        if ok {
            correct[bucket] += 1;
            overall_correct += 1;
        }
    }
    let buckets = (0..n_buckets)
        .filter(|&i| totals[i] > 0)
        .map(|i| DistanceBucket {
            lo: if i == 0 { 0 } else { bucket_edges[i - 1] },
            hi: bucket_edges.get(i).copied(),
            n: totals[i],
            accuracy: correct[i] as f64 / totals[i] as f64,
        })
        .collect();
    Ok(DyckAccuracyReport {
        overall: overall_correct as f64 / test.len() as f64,
        n_sequences: test.len(),
        buckets,
    })
}
