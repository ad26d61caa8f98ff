//! Per-subcommand JSON configs. Unknown fields are rejected so typos fail
//! loudly (exit code 3); everything that affects numerics lives here, not
//! in flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mtslm::model::{DyckBiasMode, LayerTimescales, LmConfig};
use mtslm::train::{AdamConfig, SgdAsgdConfig};

use crate::{CliError, CliResult};

/// Reads and schema-validates a config file; parse failures are schema
/// errors (exit 3), a missing file is a runtime error (exit 1).
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::Runtime(format!("cannot read config {}: {e}", path.display()))
    })?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Schema(format!("config {}: {e}", path.display())))
}

/// Writes the resolved config next to the run's outputs.
pub fn write_resolved<T: Serialize>(out_dir: &Path, config: &T) -> CliResult {
    std::fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(config)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(out_dir.join("config.resolved.json"), json + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareCorpusConfig {
    pub train_path: PathBuf,
    pub valid_path: PathBuf,
    pub test_path: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_true")]
    pub append_eos: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenMarkovConfig {
    /// A directory produced by prepare-corpus.
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Generated train-stream length; source train length when omitted.
    #[serde(default)]
    pub length: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDyckConfig {
    pub out_dir: PathBuf,
    #[serde(default = "default_quarter")]
    pub p1: f64,
    #[serde(default = "default_quarter")]
    pub p2: f64,
    #[serde(default = "default_quarter")]
    pub q: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// Model architecture selection for training runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "preset", rename_all = "kebab-case")]
pub enum LmArch {
    /// Reference three-layer architecture, every bias trainable.
    Baseline,
    /// Reference multi-timescale assignment: layer 1 fixed {3,4}, layer 2
    /// InverseGamma(0.56), layer 3 trainable.
    MultiTimescale,
    Custom {
        embed_dim: usize,
        layer_sizes: Vec<usize>,
        layer_timescales: Vec<LayerTimescales>,
        #[serde(default = "default_true")]
        tie_embeddings: bool,
        #[serde(default = "default_embed_range")]
        embed_init_range: f64,
    },
}

impl LmArch {
    pub fn to_lm_config(&self, vocab_size: usize) -> LmConfig {
        match self {
            LmArch::Baseline => LmConfig::baseline(vocab_size),
            LmArch::MultiTimescale => LmConfig::multi_timescale(vocab_size),
            LmArch::Custom {
                embed_dim,
                layer_sizes,
                layer_timescales,
                tie_embeddings,
                embed_init_range,
            } => LmConfig {
                vocab_size,
                embed_dim: *embed_dim,
                layer_sizes: layer_sizes.clone(),
                layer_timescales: layer_timescales.clone(),
                tie_embeddings: *tie_embeddings,
                embed_init_range: *embed_init_range,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainLmConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub arch: LmArch,
    #[serde(default)]
    pub optimizer: SgdAsgdConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainDyckConfig {
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    pub bias_mode: DyckBiasMode,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Default for Split {
    fn default() -> Self {
        Split::Test
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default = "default_resamples")]
    pub n_resamples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            block_len: 100,
            n_resamples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub checkpoint: PathBuf,
    pub corpus_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default = "default_model_label")]
    pub model_label: String,
    #[serde(default)]
    pub split: Split,
    /// Optional second checkpoint: bootstrap CI of (this - other)
    /// perplexity is reported per bin and overall.
    #[serde(default)]
    pub compare_checkpoint: Option<PathBuf>,
    #[serde(default = "default_model_label_b")]
    pub compare_label: String,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitTimescalesConfig {
    pub checkpoint: PathBuf,
    pub corpus_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default)]
    pub split: Split,
    /// Layers whose traces are pooled; defaults to the second layer (index
    /// 1) when present, otherwise layer 0.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Grid defaults: 0.1 to 3.0 step 0.1.
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortKeyConfig {
    Assigned,
    Estimated,
}

impl Default for SortKeyConfig {
    fn default() -> Self {
        SortKeyConfig::Assigned
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    pub checkpoint: PathBuf,
    pub corpus_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default)]
    pub split: Split,
    #[serde(default = "default_layer")]
    pub layer: usize,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default)]
    pub sort_key: SortKeyConfig,
    /// Comparison variant: also clear the ablated units' cell state.
    #[serde(default)]
    pub zero_cell: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationPolicyConfig {
    ReplaceWithUnk,
    ZeroEmbedding,
}

impl Default for AblationPolicyConfig {
    fn default() -> Self {
        AblationPolicyConfig::ReplaceWithUnk
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordAblateConfig {
    pub checkpoint: PathBuf,
    pub corpus_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default)]
    pub split: Split,
    #[serde(default = "default_ablate_pos")]
    pub ablate_pos: usize,
    #[serde(default = "default_sentence_len")]
    pub sentence_len: usize,
    #[serde(default = "default_max_sentences")]
    pub max_sentences: usize,
    #[serde(default)]
    pub policy: AblationPolicyConfig,
    /// Layer whose units get per-group curves, with the group size.
    #[serde(default)]
    pub group_layer: Option<usize>,
    #[serde(default = "default_word_group")]
    pub group_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyckEvalConfig {
    pub checkpoint: PathBuf,
    pub dataset_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default = "default_buckets")]
    pub bucket_edges: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAlphaConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Shape parameters to sweep over.
    pub alphas: Vec<f64>,
    /// Base architecture; the swept layer's mode is replaced by
    /// InverseGamma(alpha) for each run.
    pub arch: LmArch,
    #[serde(default = "default_layer")]
    pub sweep_layer: usize,
    #[serde(default)]
    pub optimizer: SgdAsgdConfig,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}
fn default_embed_range() -> f64 {
    0.1
}
fn default_quarter() -> f64 {
    0.25
}
fn default_max_len() -> usize {
    200
}
fn default_hidden() -> usize {
    256
}
fn default_block_len() -> usize {
    100
}
fn default_resamples() -> usize {
    10_000
}
fn default_model_label() -> String {
    "model".into()
}
fn default_model_label_b() -> String {
    "compare".into()
}
fn default_window() -> usize {
    70
}
fn default_layer() -> usize {
    1
}
fn default_group_size() -> usize {
    50
}
fn default_ablate_pos() -> usize {
    10
}
fn default_sentence_len() -> usize {
    40
}
fn default_max_sentences() -> usize {
    200
}
fn default_word_group() -> usize {
    100
}
fn default_buckets() -> Vec<usize> {
    vec![5, 10, 25, 50, 75, 100, 150]
}
fn default_threshold() -> f64 {
    0.5
}
