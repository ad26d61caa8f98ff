//! Experiment configs: every subcommand schema must reject malformed JSON
//! with an error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use mtslm_cli as cli;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<cli::PrepareCorpusConfig>(data);
    let _ = serde_json::from_slice::<cli::GenMarkovConfig>(data);
    let _ = serde_json::from_slice::<cli::GenDyckConfig>(data);
    let _ = serde_json::from_slice::<cli::TrainLmConfig>(data);
    let _ = serde_json::from_slice::<cli::TrainDyckConfig>(data);
    let _ = serde_json::from_slice::<cli::EvalConfig>(data);
    let _ = serde_json::from_slice::<cli::FitTimescalesConfig>(data);
    let _ = serde_json::from_slice::<cli::AblateConfig>(data);
    let _ = serde_json::from_slice::<cli::WordAblateConfig>(data);
    let _ = serde_json::from_slice::<cli::DyckEvalConfig>(data);
    let _ = serde_json::from_slice::<cli::SweepAlphaConfig>(data);
});
