//! Run-directory report merging: every CSV and JSON report in each
//! directory lands in one JSON summary keyed by run id, with the run's
//! resolved config as provenance.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::CliError;

/// Build-time version string for provenance (package version plus the git
/// commit when the build script captured one).
fn version_string() -> String {
    match option_env!("MTSLM_GIT_DESCRIBE") {
        Some(desc) => format!("mtslm {} ({desc})", env!("CARGO_PKG_VERSION")),
        None => format!("mtslm {}", env!("CARGO_PKG_VERSION")),
    }
}

/// Parses one CSV report into row objects; numeric-looking fields become
/// numbers. Errors name the file and the line.
pub fn parse_report_csv(path: &Path) -> Result<Vec<Value>, CliError> {
    let file = path.display().to_string();
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Runtime(format!("{file}: {e}")))?;
    parse_report_csv_bytes(&file, &bytes)
}

/// Byte-level CSV report parsing; `file` only labels error messages.
pub fn parse_report_csv_bytes(file: &str, bytes: &[u8]) -> Result<Vec<Value>, CliError> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| csv_err(file, &e))?
        .clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(file, &e))?;
        let mut obj = Map::new();
        for (h, v) in headers.iter().zip(record.iter()) {
            let value = match v.parse::<f64>() {
                Ok(n) if n.is_finite() => json!(n),
                _ => json!(v),
            };
            obj.insert(h.to_string(), value);
        }
        rows.push(Value::Object(obj));
    }
    Ok(rows)
}

fn csv_err(file: &str, e: &csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    CliError::Runtime(format!("csv parse error in {file} line {line}: {e}"))
}

/// Merges the reports of the given run directories. Each directory becomes
/// a section keyed by its name; a directory with no reports at all is an
/// error.
pub fn report_bundle(dirs: &[impl AsRef<Path>]) -> Result<Value, CliError> {
    let mut runs = Map::new();
    for dir in dirs {
        let dir = dir.as_ref();
        let run_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let mut reports = Map::new();
        let mut config = Value::Null;
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .collect();
        entries.sort();
        for path in entries {
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => {
                    reports.insert(stem.to_string(), Value::Array(parse_report_csv(&path)?));
                }
                Some("json") => {
                    let bytes = std::fs::read(&path)
                        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                    let value: Value = serde_json::from_slice(&bytes).map_err(|e| {
                        CliError::Runtime(format!("{}: {e}", path.display()))
                    })?;
                    if path.file_name().and_then(|n| n.to_str())
                        == Some("config.resolved.json")
                    {
                        config = value;
                    } else {
                        reports.insert(stem.to_string(), value);
                    }
                }
                _ => {}
            }
        }
        if reports.is_empty() {
            return Err(CliError::Runtime(format!(
                "{} contains no reports",
                dir.display()
            )));
        }
        runs.insert(
            run_id,
            json!({ "config": config, "reports": Value::Object(reports) }),
        );
    }
    Ok(json!({
        "version": version_string(),
        "runs": Value::Object(runs),
    }))
}
