//! Dataset files are JSON-lines, one `{"symbols": ..., "max_distance": ...}`
//! object per sequence. Targets and distances are recomputed on load, which
//! keeps the files small; the stored max distance doubles as an integrity
//! check.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DyckSequence;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SequenceRecord {
    symbols: String,
    max_distance: usize,
}

pub fn save_dyck_jsonl(path: &Path, sequences: &[DyckSequence]) -> Result<()> {
    let mut out = String::new();
    for seq in sequences {
        let record = SequenceRecord {
            symbols: seq.symbols.clone(),
            max_distance: seq.max_distance,
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_dyck_jsonl(path: &Path) -> Result<Vec<DyckSequence>> {
    dataset_from_jsonl(&std::fs::read(path)?)
}

/// Parses a JSON-lines dataset, revalidating every sequence.
pub fn dataset_from_jsonl(bytes: &[u8]) -> Result<Vec<DyckSequence>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::InvalidParameter {
        name: "dataset file",
        reason: format!("not valid UTF-8: {e}"),
    })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SequenceRecord = serde_json::from_str(line)?;
        let seq = DyckSequence::from_symbols(record.symbols)?;
        if seq.max_distance != record.max_distance {
            return Err(Error::InvalidParameter {
                name: "dataset file",
                reason: format!(
                    "line {}: stored max_distance {} disagrees with recomputed {}",
                    lineno + 1,
                    record.max_distance,
                    seq.max_distance
                ),
            });
        }
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyck::{build_dyck_dataset, DyckGrammarParams};

    #[test]
    fn jsonl_round_trip_recomputes_targets() {
        let params = DyckGrammarParams::default();
        let ds = build_dyck_dataset(&params, 25, 5, 5, 1).unwrap();
        let dir = std::env::temp_dir().join(format!("mtslm-dyck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("train.jsonl");
        save_dyck_jsonl(&path, &ds.train).unwrap();
        let loaded = load_dyck_jsonl(&path).unwrap();
        assert_eq!(loaded, ds.train);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn parse_rejects_corrupt_lines() {
        assert!(dataset_from_jsonl(b"{\"symbols\":\"()\"").is_err());
        assert!(dataset_from_jsonl(b"{\"symbols\":\"(]\",\"max_distance\":1}\n").is_err());
        assert!(dataset_from_jsonl(b"{\"symbols\":\"()\",\"max_distance\":5}\n").is_err());
        assert!(dataset_from_jsonl(&[0xFF, 0xFE]).is_err());
        // Blank lines are tolerated.
        let ok = dataset_from_jsonl(b"\n{\"symbols\":\"()\",\"max_distance\":1}\n\n").unwrap();
        assert_eq!(ok.len(), 1);
    }
}
