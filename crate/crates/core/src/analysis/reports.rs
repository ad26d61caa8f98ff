//! CSV report writers. Schemas:
//!
//! * `table1.csv`   — model, bin, perplexity
//! * `bootstrap.csv`— block_len, n_resamples, mean_diff, ci_low, ci_high, significant
//! * `ksfit.csv`    — family, param, d
//! * `routing.csv`  — group, mean_timescale, bin, ratio
//! * `decay.csv`    — series, tau, value
//! * `dyck_acc.csv` — bucket_lo, bucket_hi, n, accuracy

use std::path::Path;

use serde::Serialize;

use super::{AblationReport, BootstrapResult, DecayReport, DyckAccuracyReport, KsFitResult};
use crate::corpus::FrequencyBin;
use crate::Result;

/// One `table1.csv` row.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub model: String,
    pub bin: String,
    pub perplexity: f64,
}

impl Table1Row {
    /// Rows for one model: the four bins plus the "All tokens" column.
    pub fn for_model(
        model: &str,
        per_bin: &[Option<f64>; 4],
        overall: f64,
    ) -> Vec<Table1Row> {
        let mut rows: Vec<Table1Row> = FrequencyBin::ALL
            .iter()
            .zip(per_bin.iter())
            .filter_map(|(bin, ppl)| {
                ppl.map(|p| Table1Row {
                    model: model.to_string(),
                    bin: bin.label().to_string(),
                    perplexity: p,
                })
            })
            .collect();
        rows.push(Table1Row {
            model: model.to_string(),
            bin: "all".to_string(),
            perplexity: overall,
        });
        rows
    }
}

pub fn write_table1_csv(path: &Path, rows: &[Table1Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bootstrap_csv(path: &Path, results: &[(String, BootstrapResult)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "comparison",
        "block_len",
        "n_resamples",
        "mean_diff",
        "ci_low",
        "ci_high",
        "significant",
    ])?;
    for (name, r) in results {
        w.write_record([
            name.clone(),
            r.block_len.to_string(),
            r.n_resamples.to_string(),
            r.mean_diff.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ksfit_csv(path: &Path, fits: &[KsFitResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["family", "param", "d"])?;
    for fit in fits {
        for (p, d) in fit.grid.iter().zip(&fit.d_values) {
            w.write_record([fit.family.label().to_string(), p.to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_routing_csv(path: &Path, report: &AblationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "mean_timescale", "bin", "ratio"])?;
    for g in &report.groups {
        for (bin, ratio) in FrequencyBin::ALL.iter().zip(&g.per_bin_ratio) {
            if let Some(r) = ratio {
                w.write_record([
                    g.index.to_string(),
                    g.mean_timescale.to_string(),
                    bin.label().to_string(),
                    r.to_string(),
                ])?;
            }
        }
        w.write_record([
            g.index.to_string(),
            g.mean_timescale.to_string(),
            "all".to_string(),
            g.overall_ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_decay_csv(path: &Path, report: &DecayReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "tau", "value"])?;
    for (l, curve) in report.per_layer.iter().enumerate() {
        for (tau, v) in curve.iter().enumerate() {
            w.write_record([format!("layer{l}"), tau.to_string(), v.to_string()])?;
        }
    }
    if let Some(groups) = &report.per_group {
        for g in groups {
            let name = format!("group_T{:.2}", g.mean_timescale);
            for (tau, v) in g.values.iter().enumerate() {
                w.write_record([name.clone(), tau.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dyck_acc_csv(path: &Path, report: &DyckAccuracyReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bucket_lo", "bucket_hi", "n", "accuracy"])?;
    for b in &report.buckets {
        w.write_record([
            b.lo.to_string(),
            b.hi.map(|h| h.to_string()).unwrap_or_else(|| "inf".into()),
            b.n.to_string(),
            b.accuracy.to_string(),
        ])?;
    }
    w.write_record([
        "0".to_string(),
        "inf".to_string(),
        report.n_sequences.to_string(),
        report.overall.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_rows_include_all_column() {
        let rows = Table1Row::for_model("baseline", &[Some(6.8), None, None, Some(2100.0)], 61.4);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.last().unwrap().bin, "all");
        let dir = std::env::temp_dir().join(format!("mtslm-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("table1.csv");
        write_table1_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("model,bin,perplexity\n"));
        assert!(text.contains("baseline,all,61.4"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
