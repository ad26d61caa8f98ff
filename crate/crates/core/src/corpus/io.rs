//! On-disk corpus formats: raw little-endian u32 token arrays plus a JSON
//! vocabulary sidecar of `{token, id, count}` records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Vocab;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub id: u32,
    pub count: u64,
}

pub fn save_tokens_bin(path: &Path, tokens: &[u32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(tokens.len() * 4);
    for &t in tokens {
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_tokens_bin(path: &Path) -> Result<Vec<u32>> {
    decode_tokens(&std::fs::read(path)?)
}

/// Decodes a raw little-endian u32 array. Rejects lengths that are not a
/// multiple of four.
pub fn decode_tokens(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidParameter {
            name: "token file",
            reason: format!("length {} is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn save_vocab_json(path: &Path, vocab: &Vocab) -> Result<()> {
    let entries: Vec<VocabEntry> = (0..vocab.len() as u32)
        .map(|id| VocabEntry {
            token: vocab.token(id).unwrap_or_default().to_string(),
            id,
            count: vocab.count(id),
        })
        .collect();
    let json = serde_json::to_string_pretty(&entries)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_vocab_json(path: &Path) -> Result<Vocab> {
    vocab_from_json(&std::fs::read(path)?)
}

/// Parses the vocabulary sidecar. Ids must be exactly 0..n in file order.
pub fn vocab_from_json(bytes: &[u8]) -> Result<Vocab> {
    let entries: Vec<VocabEntry> = serde_json::from_slice(bytes)?;
    if entries.is_empty() {
        return Err(Error::EmptyInput("vocab file"));
    }
    let mut id_to_token = Vec::with_capacity(entries.len());
    let mut counts = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        if e.id as usize != i {
            return Err(Error::InvalidParameter {
                name: "vocab",
                reason: format!("ids must be dense and ordered; entry {i} has id {}", e.id),
            });
        }
        id_to_token.push(e.token.clone());
        counts.push(e.count);
    }
    Vocab::from_parts(id_to_token, counts)
}
