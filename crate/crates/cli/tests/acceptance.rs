//! Acceptance criterion 10: any training or generation command re-run
//! with the same config and seed reproduces byte-identical artifacts.
//! (The per-epoch log's wallclock column is diagnostics, not a numeric
//! output; it is compared field-by-field with wallclock excluded.)

use std::fs;
use std::path::{Path, PathBuf};

use mtslm_cli::run;

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["mtslm".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    run(full)
}

fn report(criterion: &str, pass: bool, details: &str) {
    println!(
        "[acceptance] {criterion}: {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {details}");
}

fn synthetic_split(n: usize, seed: u64) -> String {
    let mut state = seed | 1;
    let mut cur = 0usize;
    let mut out = String::new();
    for i in 0..n {
        out.push_str(&format!("w{cur} "));
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        cur = if state % 10 < 9 {
            (cur * 7 + 3) % 30
        } else {
            (state % 30) as usize
        };
        if i % 12 == 11 {
            out.push('\n');
        }
    }
    out
}

/// Byte-compare two run directories; `log.csv` is compared with the
/// wallclock_s column dropped.
fn assert_identical_runs(a: &Path, b: &Path) -> (usize, bool) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut compared = 0;
    for name in &names {
        let fa = fs::read(a.join(name)).unwrap();
        let fb = fs::read(b.join(name)).unwrap();
        if name == "log.csv" {
            let strip = |bytes: &[u8]| {
                String::from_utf8_lossy(bytes)
                    .lines()
                    .map(|l| {
                        let cols: Vec<&str> = l.split(',').collect();
                        cols[..cols.len().saturating_sub(1)].join(",")
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(&fa), strip(&fb), "{name} differs beyond wallclock");
        } else if name == "config.resolved.json" {
            // Configs contain the differing out_dir paths by construction.
            continue;
        } else {
            assert_eq!(fa, fb, "{name} differs between reruns");
        }
        compared += 1;
    }
    (compared, true)
}

#[test]
fn c10_byte_identical_artifacts() {
    let started = std::time::Instant::now();
    let ws = tempfile::tempdir().unwrap();
    let path = |n: &str| ws.path().join(n);
    let write_json = |n: &str, v: serde_json::Value| -> PathBuf {
        let p = path(n);
        fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
        p
    };

    fs::write(path("train.txt"), synthetic_split(2500, 1)).unwrap();
    fs::write(path("valid.txt"), synthetic_split(300, 2)).unwrap();
    fs::write(path("test.txt"), synthetic_split(300, 3)).unwrap();

    let mut compared_total = 0;

    // prepare-corpus twice.
    for out in ["corpus-a", "corpus-b"] {
        let cfg = write_json(
            &format!("prep-{out}.json"),
            serde_json::json!({
                "train_path": path("train.txt"),
                "valid_path": path("valid.txt"),
                "test_path": path("test.txt"),
                "out_dir": path(out),
            }),
        );
        assert_eq!(cli(&["prepare-corpus", "--config", cfg.to_str().unwrap()]), 0);
    }
    compared_total += assert_identical_runs(&path("corpus-a"), &path("corpus-b")).0;

    // gen-markov twice.
    for out in ["markov-a", "markov-b"] {
        let cfg = write_json(
            &format!("markov-{out}.json"),
            serde_json::json!({
                "corpus_dir": path("corpus-a"),
                "out_dir": path(out),
                "seed": 5,
            }),
        );
        assert_eq!(cli(&["gen-markov", "--config", cfg.to_str().unwrap()]), 0);
    }
    compared_total += assert_identical_runs(&path("markov-a"), &path("markov-b")).0;

    // gen-dyck twice.
    for out in ["dyck-a", "dyck-b"] {
        let cfg = write_json(
            &format!("dyck-{out}.json"),
            serde_json::json!({
                "out_dir": path(out),
                "n_train": 80, "n_valid": 20, "n_test": 40,
                "seed": 7,
            }),
        );
        assert_eq!(cli(&["gen-dyck", "--config", cfg.to_str().unwrap()]), 0);
    }
    compared_total += assert_identical_runs(&path("dyck-a"), &path("dyck-b")).0;

    // train-lm twice (multi-timescale custom arch so frozen buffers ride
    // through the checkpoint too).
    let arch = serde_json::json!({
        "preset": "custom",
        "embed_dim": 10,
        "layer_sizes": [10, 10],
        "layer_timescales": [
            {"mode": "inverse-gamma", "alpha": 0.56, "assign": "quantile"},
            {"mode": "trainable"},
        ],
    });
    for out in ["lm-a", "lm-b"] {
        let cfg = write_json(
            &format!("trainlm-{out}.json"),
            serde_json::json!({
                "corpus_dir": path("corpus-a"),
                "out_dir": path(out),
                "arch": arch,
                "optimizer": {"lr": 3.0, "epochs": 2, "batch_size": 5},
                "seed": 11,
            }),
        );
        assert_eq!(cli(&["train-lm", "--config", cfg.to_str().unwrap()]), 0);
    }
    compared_total += assert_identical_runs(&path("lm-a"), &path("lm-b")).0;

    // train-dyck twice.
    for out in ["dyckrun-a", "dyckrun-b"] {
        let cfg = write_json(
            &format!("traindyck-{out}.json"),
            serde_json::json!({
                "dataset_dir": path("dyck-a"),
                "out_dir": path(out),
                "hidden_size": 8,
                "bias_mode": {"mode": "inverse-gamma", "alpha": 1.5},
                "optimizer": {"lr": 0.001, "epochs": 2},
                "seed": 13,
            }),
        );
        assert_eq!(cli(&["train-dyck", "--config", cfg.to_str().unwrap()]), 0);
    }
    compared_total += assert_identical_runs(&path("dyckrun-a"), &path("dyckrun-b")).0;

    let elapsed = started.elapsed();
    report(
        "criterion 10 (byte-identical artifacts)",
        compared_total >= 14,
        &format!("{compared_total} artifacts byte-compared across 5 command pairs, {elapsed:?}"),
    );
}
