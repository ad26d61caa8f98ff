//! Checkpoint container: a JSON header (config, timescale specs, buffer
//! table, RNG and optimizer state, payload checksum) followed by the
//! concatenated little-endian f64 buffers.
//!
//! ```text
//! magic "MTSCKPT\0" | header_len: u64 LE | header JSON | payload f64 LE…
//! ```
//!
//! Round trips are bit-exact: save → load → save produces identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dyck_model::{DyckModel, DyckModelConfig};
use super::lm::{LanguageModel, LmConfig};
use crate::mathkernel::{LstmLayer, Matrix};
use crate::timescale::TimescaleSpec;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MTSCKPT\0";
/// Upper bound on the header, guards length-field abuse in corrupt files.
const MAX_HEADER_BYTES: u64 = 64 * 1024 * 1024;

/// Seedable RNG position, enough to restore a ChaCha stream exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn from_word_pos(seed: u64, stream: u64, word_pos: u128) -> Self {
        RngState {
            seed,
            stream,
            word_pos_hi: (word_pos >> 64) as u64,
            word_pos_lo: word_pos as u64,
        }
    }

    pub fn word_pos(&self) -> u128 {
        ((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128
    }
}

/// Optimizer state riding along with a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerSnapshot {
    /// "sgd-asgd" or "adam".
    pub kind: String,
    pub step: u64,
    /// Small scalar state (trigger epoch, averaging count, …).
    pub scalars: serde_json::Value,
    pub rng: RngState,
    /// Moment/averaging buffers, named after their parameters.
    pub buffers: Vec<(String, Vec<f64>)>,
}

/// Either model family.
pub enum CheckpointModel {
    Lm(LanguageModel),
    Dyck(DyckModel),
}

pub struct LoadedCheckpoint {
    pub model: CheckpointModel,
    pub trainer: Option<TrainerSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct BufferEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    kind: String,
    step: u64,
    scalars: serde_json::Value,
    rng: RngState,
    buffer_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    seed: u64,
    config: serde_json::Value,
    timescales: Vec<Option<TimescaleSpec>>,
    buffers: Vec<BufferEntry>,
    trainer: Option<TrainerMeta>,
    payload_f64_len: usize,
    payload_sha256: String,
}

fn payload_bytes(buffers: &[(&str, (usize, usize), bool, &[f64])]) -> (Vec<BufferEntry>, Vec<u8>) {
    let mut entries = Vec::with_capacity(buffers.len());
    let mut bytes = Vec::new();
    let mut offset = 0usize;
    for (name, shape, frozen, values) in buffers {
        entries.push(BufferEntry {
            name: name.to_string(),
            rows: shape.0,
            cols: shape.1,
            offset,
            frozen: *frozen,
        });
        for v in *values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        offset += values.len();
    }
    (entries, bytes)
}

pub fn save_checkpoint(
    path: &Path,
    model: &CheckpointModel,
    trainer: Option<&TrainerSnapshot>,
) -> Result<()> {
    let bytes = checkpoint_to_bytes(model, trainer)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn checkpoint_to_bytes(
    model: &CheckpointModel,
    trainer: Option<&TrainerSnapshot>,
) -> Result<Vec<u8>> {
    let (kind, seed, config, timescales, views) = match model {
        CheckpointModel::Lm(m) => (
            "language-model",
            m.seed,
            serde_json::to_value(&m.config)?,
            m.specs.clone(),
            m.param_views(),
        ),
        CheckpointModel::Dyck(m) => (
            "dyck-model",
            m.seed,
            serde_json::to_value(m.config)?,
            vec![m.spec.clone()],
            m.param_views(),
        ),
    };
    let mut raw: Vec<(&str, (usize, usize), bool, &[f64])> = views
        .iter()
        .map(|p| (p.name.as_str(), p.shape, p.frozen, p.values))
        .collect();
    if let Some(t) = trainer {
        for (name, values) in &t.buffers {
            raw.push((name.as_str(), (1, values.len()), false, values.as_slice()));
        }
    }
    let (entries, payload) = payload_bytes(&raw);
    let digest = Sha256::digest(&payload);
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        seed,
        config,
        timescales,
        buffers: entries,
        trainer: trainer.map(|t| TrainerMeta {
            kind: t.kind.clone(),
            step: t.step,
            scalars: t.scalars.clone(),
            rng: t.rng,
            buffer_names: t.buffers.iter().map(|(n, _)| n.clone()).collect(),
        }),
        payload_f64_len: payload.len() / 8,
        payload_sha256: hex_string(&digest),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header_json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    load_checkpoint_bytes(&std::fs::read(path)?)
}

/// Parses a checkpoint from raw bytes; every malformation is a typed error,
/// never a panic. This is the fuzzing entry point for the format.
pub fn load_checkpoint_bytes(bytes: &[u8]) -> Result<LoadedCheckpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::CheckpointFormat("bad magic".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if header_len > MAX_HEADER_BYTES || 16 + header_len as usize > bytes.len() {
        return Err(Error::ChecksumMismatch(
            "file truncated inside header".into(),
        ));
    }
    let header_end = 16 + header_len as usize;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: header.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let payload = &bytes[header_end..];
    if payload.len() != header.payload_f64_len * 8 {
        return Err(Error::ChecksumMismatch(format!(
            "payload length {} does not match header ({} f64s)",
            payload.len(),
            header.payload_f64_len
        )));
    }
    let digest = Sha256::digest(payload);
    if hex_string(&digest) != header.payload_sha256 {
        return Err(Error::ChecksumMismatch("payload sha256 mismatch".into()));
    }

    let read_buffer = |entry: &BufferEntry| -> Result<Vec<f64>> {
        let len = entry.rows.checked_mul(entry.cols).ok_or_else(|| {
            Error::CheckpointFormat(format!("buffer {} shape overflow", entry.name))
        })?;
        let start = entry.offset.checked_mul(8).ok_or_else(|| {
            Error::CheckpointFormat(format!("buffer {} offset overflow", entry.name))
        })?;
        let end = start
            .checked_add(len * 8)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| {
                Error::CheckpointFormat(format!("buffer {} out of payload bounds", entry.name))
            })?;
        Ok(payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let find = |name: &str| -> Result<&BufferEntry> {
        header
            .buffers
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::CheckpointFormat(format!("missing buffer {name}")))
    };

    let model = match header.kind.as_str() {
        "language-model" => {
            let config: LmConfig = serde_json::from_value(header.config.clone())?;
            config.validate()?;
            if header.timescales.len() != config.layer_sizes.len() {
                return Err(Error::CheckpointFormat(
                    "timescale spec count does not match layer count".into(),
                ));
            }
            let mut embedding = Matrix::zeros(config.vocab_size, config.embed_dim);
            fill_matrix(&mut embedding, &read_buffer(find("embedding")?)?, "embedding")?;
            let mut layers = Vec::new();
            let mut input = config.embed_dim;
            for (l, &hidden) in config.layer_sizes.iter().enumerate() {
                let mut layer = LstmLayer::new(input, hidden);
                fill_layer(&mut layer, l, &read_buffer, &find)?;
                layer.bias_frozen = header.timescales[l].is_some();
                verify_spec_biases(&header.timescales[l], &layer, l)?;
                layers.push(layer);
                input = hidden;
            }
            CheckpointModel::Lm(LanguageModel {
                config,
                embedding,
                layers,
                specs: header.timescales.clone(),
                seed: header.seed,
            })
        }
        "dyck-model" => {
            let config: DyckModelConfig = serde_json::from_value(header.config.clone())?;
            if config.hidden_size < 2 {
                return Err(Error::CheckpointFormat("dyck hidden size too small".into()));
            }
            let mut layer = LstmLayer::new(4, config.hidden_size);
            fill_layer(&mut layer, 0, &read_buffer, &find)?;
            let spec = header
                .timescales
                .first()
                .cloned()
                .flatten();
            layer.bias_frozen = spec.is_some();
            verify_spec_biases(&spec, &layer, 0)?;
            let mut w_out = Matrix::zeros(2, config.hidden_size);
            fill_matrix(&mut w_out, &read_buffer(find("w_out")?)?, "w_out")?;
            let b_out = read_buffer(find("b_out")?)?;
            if b_out.len() != 2 {
                return Err(Error::CheckpointFormat("b_out must have 2 values".into()));
            }
            CheckpointModel::Dyck(DyckModel {
                config,
                layer,
                w_out,
                b_out,
                spec,
                seed: header.seed,
            })
        }
        other => {
            return Err(Error::CheckpointFormat(format!(
                "unknown model kind {other:?}"
            )))
        }
    };

    let trainer = match header.trainer {
        None => None,
        Some(meta) => {
            let mut buffers = Vec::with_capacity(meta.buffer_names.len());
            for name in &meta.buffer_names {
                buffers.push((name.clone(), read_buffer(find(name)?)?));
            }
            Some(TrainerSnapshot {
                kind: meta.kind,
                step: meta.step,
                scalars: meta.scalars,
                rng: meta.rng,
                buffers,
            })
        }
    };

    Ok(LoadedCheckpoint { model, trainer })
}

fn fill_matrix(m: &mut Matrix, values: &[f64], name: &str) -> Result<()> {
    if values.len() != m.data().len() {
        return Err(Error::CheckpointFormat(format!(
            "buffer {name} has {} values, expected {}",
            values.len(),
            m.data().len()
        )));
    }
    m.data_mut().copy_from_slice(values);
    Ok(())
}

fn fill_vec(v: &mut [f64], values: &[f64], name: &str) -> Result<()> {
    if values.len() != v.len() {
        return Err(Error::CheckpointFormat(format!(
            "buffer {name} has {} values, expected {}",
            values.len(),
            v.len()
        )));
    }
    v.copy_from_slice(values);
    Ok(())
}

fn fill_layer<'h>(
    layer: &mut LstmLayer,
    l: usize,
    read_buffer: &impl Fn(&BufferEntry) -> Result<Vec<f64>>,
    find: &impl Fn(&str) -> Result<&'h BufferEntry>,
) -> Result<()> {
    let n = |suffix: &str| format!("layer{l}.{suffix}");
    fill_matrix(&mut layer.w_ix, &read_buffer(find(&n("w_ix"))?)?, &n("w_ix"))?;
    fill_matrix(&mut layer.w_ih, &read_buffer(find(&n("w_ih"))?)?, &n("w_ih"))?;
    fill_matrix(&mut layer.w_fx, &read_buffer(find(&n("w_fx"))?)?, &n("w_fx"))?;
    fill_matrix(&mut layer.w_fh, &read_buffer(find(&n("w_fh"))?)?, &n("w_fh"))?;
    fill_matrix(&mut layer.w_cx, &read_buffer(find(&n("w_cx"))?)?, &n("w_cx"))?;
    fill_matrix(&mut layer.w_ch, &read_buffer(find(&n("w_ch"))?)?, &n("w_ch"))?;
    fill_vec(&mut layer.b_i, &read_buffer(find(&n("b_i"))?)?, &n("b_i"))?;
    fill_vec(&mut layer.b_f, &read_buffer(find(&n("b_f"))?)?, &n("b_f"))?;
    fill_vec(&mut layer.b_c, &read_buffer(find(&n("b_c"))?)?, &n("b_c"))?;
    Ok(())
}

/// The stored spec and the stored bias buffers must agree; a file that
/// disagrees was corrupted or hand-edited.
fn verify_spec_biases(
    spec: &Option<TimescaleSpec>,
    layer: &LstmLayer,
    l: usize,
) -> Result<()> {
    if let Some(s) = spec {
        if s.len() != layer.hidden_size {
            return Err(Error::CheckpointFormat(format!(
                "layer {l}: timescale spec has {} units, layer has {}",
                s.len(),
                layer.hidden_size
            )));
        }
        if s.forget_biases() != layer.b_f.as_slice()
            || s.input_biases() != layer.b_i.as_slice()
        {
            return Err(Error::CheckpointFormat(format!(
                "layer {l}: frozen bias buffers disagree with the timescale spec"
            )));
        }
    }
    Ok(())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lm::{build_lm, LayerTimescales, LmConfig};
    use crate::model::dyck_model::{build_dyck_model, DyckBiasMode};
    use crate::timescale::AssignMode;

    fn mts_config() -> LmConfig {
        LmConfig {
            vocab_size: 11,
            embed_dim: 4,
            layer_sizes: vec![6, 4],
            layer_timescales: vec![
                LayerTimescales::InverseGamma {
                    alpha: 0.56,
                    assign: AssignMode::Quantile,
                },
                LayerTimescales::Trainable,
            ],
            tie_embeddings: true,
            embed_init_range: 0.1,
        }
    }

    fn snapshot() -> TrainerSnapshot {
        TrainerSnapshot {
            kind: "adam".into(),
            step: 42,
            scalars: serde_json::json!({"t": 42}),
            rng: RngState::from_word_pos(7, 1, 123456789012345678901u128),
            buffers: vec![("trainer.m.layer0.w_ix".into(), vec![0.25; 24])],
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = build_lm(&mts_config(), 3).unwrap();
        let snap = snapshot();
        let bytes1 =
            checkpoint_to_bytes(&CheckpointModel::Lm(model), Some(&snap)).unwrap();
        let loaded = load_checkpoint_bytes(&bytes1).unwrap();
        let bytes2 = checkpoint_to_bytes(&loaded.model, loaded.trainer.as_ref()).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn round_trip_preserves_everything() {
        let model = build_lm(&mts_config(), 9).unwrap();
        let spec_before = model.specs[0].clone().unwrap();
        let params_before: Vec<u64> = model
            .param_views()
            .iter()
            .flat_map(|p| p.values.iter().map(|v| v.to_bits()))
            .collect();
        let snap = snapshot();
        let bytes = checkpoint_to_bytes(&CheckpointModel::Lm(model), Some(&snap)).unwrap();
        let loaded = load_checkpoint_bytes(&bytes).unwrap();
        let CheckpointModel::Lm(lm) = loaded.model else {
            panic!("wrong kind")
        };
        let params_after: Vec<u64> = lm
            .param_views()
            .iter()
            .flat_map(|p| p.values.iter().map(|v| v.to_bits()))
            .collect();
        assert_eq!(params_before, params_after);
        // Assigned-timescale array identical through the header.
        assert_eq!(lm.specs[0].as_ref().unwrap(), &spec_before);
        assert!(lm.layers[0].bias_frozen);
        let t = loaded.trainer.unwrap();
        assert_eq!(t, snap);
        assert_eq!(t.rng.word_pos(), 123456789012345678901u128);
    }

    #[test]
    fn dyck_round_trip() {
        let model = build_dyck_model(
            &DyckModelConfig {
                hidden_size: 8,
                bias_mode: DyckBiasMode::InverseGamma { alpha: 1.5 },
            },
            5,
        )
        .unwrap();
        let before: Vec<u64> = model
            .param_views()
            .iter()
            .flat_map(|p| p.values.iter().map(|v| v.to_bits()))
            .collect();
        let bytes = checkpoint_to_bytes(&CheckpointModel::Dyck(model), None).unwrap();
        let loaded = load_checkpoint_bytes(&bytes).unwrap();
        let CheckpointModel::Dyck(d) = loaded.model else {
            panic!("wrong kind")
        };
        let after: Vec<u64> = d
            .param_views()
            .iter()
            .flat_map(|p| p.values.iter().map(|v| v.to_bits()))
            .collect();
        assert_eq!(before, after);
        assert!(d.layer.bias_frozen);
    }

    #[test]
    fn truncation_and_corruption_are_checksum_errors() {
        let model = build_lm(&mts_config(), 1).unwrap();
        let bytes = checkpoint_to_bytes(&CheckpointModel::Lm(model), None).unwrap();
        // Truncated payload.
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            load_checkpoint_bytes(cut),
            Err(Error::ChecksumMismatch(_))
        ));
        // Flipped payload byte.
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0xFF;
        assert!(matches!(
            load_checkpoint_bytes(&flipped),
            Err(Error::ChecksumMismatch(_))
        ));
        // Bad magic.
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            load_checkpoint_bytes(&bad),
            Err(Error::CheckpointFormat(_))
        ));
        // Version bump.
        let mut v = bytes.clone();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_str = String::from_utf8(bytes[16..16 + hlen].to_vec()).unwrap();
        let bumped = header_str.replace("\"format_version\":1", "\"format_version\":2");
        v.splice(16..16 + hlen, bumped.into_bytes());
        // (header length unchanged because 1 → 2 is same width)
        assert!(matches!(
            load_checkpoint_bytes(&v),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn garbage_inputs_error_cleanly() {
        assert!(load_checkpoint_bytes(b"").is_err());
        assert!(load_checkpoint_bytes(b"MTSCKPT\0").is_err());
        let mut huge = Vec::from(*b"MTSCKPT\0");
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(b"{}");
        assert!(load_checkpoint_bytes(&huge).is_err());
    }
}
