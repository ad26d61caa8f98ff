//! Word-level corpus handling: vocabulary, stateful batch plans, the
//! bigram Markov control corpus, and word-frequency bins.
//!
//! Input text is pre-tokenized, one sentence/paragraph per line; the loader
//! only splits on whitespace and (by default) appends an end-of-sentence
//! token per line. The vocabulary is built from the training split alone;
//! anything else maps to the unknown token.

mod batch;
mod io;
mod markov;

use std::collections::HashMap;

use crate::{Error, Result};

pub use batch::{extract_window, make_batch_plan, BatchMode, BatchPlan, TokenWindow, Window};
pub use io::{
    decode_tokens, load_tokens_bin, load_vocab_json, save_tokens_bin, save_vocab_json,
    vocab_from_json, VocabEntry,
};
pub use markov::generate_markov_corpus;

pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Whether a line break becomes an end-of-sentence token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EosPolicy {
    AppendEos,
    None,
}

/// Bijective token ↔ id map with training-split counts.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    counts: Vec<u64>,
    unk_id: u32,
    eos_id: Option<u32>,
}

impl Vocab {
    /// Builds from training tokens in order of first appearance. `<unk>` is
    /// id 0 unless it occurs in the training data itself.
    fn from_train_tokens(tokens: &[String]) -> Self {
        let mut token_to_id: HashMap<String, u32> = HashMap::new();
        let mut id_to_token: Vec<String> = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        token_to_id.insert(UNK_TOKEN.to_string(), 0);
        id_to_token.push(UNK_TOKEN.to_string());
        counts.push(0);
        for tok in tokens {
            match token_to_id.get(tok) {
                Some(&id) => counts[id as usize] += 1,
                None => {
                    let id = id_to_token.len() as u32;
                    token_to_id.insert(tok.clone(), id);
                    id_to_token.push(tok.clone());
                    counts.push(1);
                }
            }
        }
        let eos_id = token_to_id.get(EOS_TOKEN).copied();
        Vocab {
            token_to_id,
            id_to_token,
            counts,
            unk_id: 0,
            eos_id,
        }
    }

    pub(crate) fn from_parts(id_to_token: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if id_to_token.len() != counts.len() {
            return Err(Error::ShapeMismatch {
                context: "Vocab::from_parts",
                expected: format!("{}", id_to_token.len()),
                got: format!("{}", counts.len()),
            });
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, tok) in id_to_token.iter().enumerate() {
            if token_to_id.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::InvalidParameter {
                    name: "vocab",
                    reason: format!("duplicate token {tok:?}"),
                });
            }
        }
        let unk_id = *token_to_id.get(UNK_TOKEN).ok_or(Error::InvalidParameter {
            name: "vocab",
            reason: "missing <unk> token".into(),
        })?;
        let eos_id = token_to_id.get(EOS_TOKEN).copied();
        Ok(Vocab {
            token_to_id,
            id_to_token,
            counts,
            unk_id,
            eos_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn eos_id(&self) -> Option<u32> {
        self.eos_id
    }

    /// Token id, falling back to `<unk>`.
    pub fn lookup(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(self.unk_id)
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Training-split occurrence count.
    pub fn count(&self, id: u32) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub(crate) fn set_counts(&mut self, counts: Vec<u64>) -> Result<()> {
        if counts.len() != self.counts.len() {
            return Err(Error::ShapeMismatch {
                context: "Vocab::set_counts",
                expected: format!("{}", self.counts.len()),
                got: format!("{}", counts.len()),
            });
        }
        self.counts = counts;
        Ok(())
    }

    pub fn detokenize(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect()
    }
}

/// Where a corpus came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Natural,
    MarkovBigram,
}

/// Tokenized train/valid/test splits with their shared vocabulary.
#[derive(Debug, Clone)]
pub struct CorpusBundle {
    pub train: Vec<u32>,
    pub valid: Vec<u32>,
    pub test: Vec<u32>,
    pub vocab: Vocab,
    pub provenance: Provenance,
}

impl CorpusBundle {
    pub fn validate(&self) -> Result<()> {
        let v = self.vocab.len() as u32;
        for split in [&self.train, &self.valid, &self.test] {
            if let Some(&bad) = split.iter().find(|&&id| id >= v) {
                return Err(Error::TokenOutOfRange {
                    id: bad,
                    vocab_size: v as usize,
                });
            }
        }
        Ok(())
    }
}

/// Splits a pre-tokenized text into tokens, appending `<eos>` per line when
/// asked to.
pub fn tokenize(text: &str, eos: EosPolicy) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        out.extend(line.split_whitespace().map(|t| t.to_string()));
        if eos == EosPolicy::AppendEos {
            out.push(EOS_TOKEN.to_string());
        }
    }
    out
}

/// Builds a corpus from raw split texts. The vocabulary comes from the
/// training split only; out-of-vocabulary tokens in valid/test map to
/// `<unk>`.
pub fn load_corpus(
    train_text: &str,
    valid_text: &str,
    test_text: &str,
    eos: EosPolicy,
) -> Result<CorpusBundle> {
    let train_tokens = tokenize(train_text, eos);
    if train_tokens.is_empty() {
        return Err(Error::EmptyInput("training text"));
    }
    let vocab = Vocab::from_train_tokens(&train_tokens);
    let train = train_tokens.iter().map(|t| vocab.lookup(t)).collect();
    let valid = tokenize(valid_text, eos)
        .iter()
        .map(|t| vocab.lookup(t))
        .collect();
    let test = tokenize(test_text, eos)
        .iter()
        .map(|t| vocab.lookup(t))
        .collect();
    Ok(CorpusBundle {
        train,
        valid,
        test,
        vocab,
        provenance: Provenance::Natural,
    })
}

/// Reads the three split files and builds the corpus.
pub fn load_corpus_files(
    train_path: &std::path::Path,
    valid_path: &std::path::Path,
    test_path: &std::path::Path,
    eos: EosPolicy,
) -> Result<CorpusBundle> {
    let train = std::fs::read_to_string(train_path)?;
    let valid = std::fs::read_to_string(valid_path)?;
    let test = std::fs::read_to_string(test_path)?;
    load_corpus(&train, &valid, &test, eos)
}

/// Training-frequency bin of a token. Boundaries are half-open with the
/// boundary count falling in the lower-frequency bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrequencyBin {
    /// count > 10000
    Above10k = 0,
    /// 1000 < count ≤ 10000
    From1kTo10k = 1,
    /// 100 < count ≤ 1000
    From100To1k = 2,
    /// count ≤ 100
    Below100 = 3,
}

impl FrequencyBin {
    pub const ALL: [FrequencyBin; 4] = [
        FrequencyBin::Above10k,
        FrequencyBin::From1kTo10k,
        FrequencyBin::From100To1k,
        FrequencyBin::Below100,
    ];

    pub fn of_count(count: u64) -> FrequencyBin {
        if count > 10_000 {
            FrequencyBin::Above10k
        } else if count > 1_000 {
            FrequencyBin::From1kTo10k
        } else if count > 100 {
            FrequencyBin::From100To1k
        } else {
            FrequencyBin::Below100
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FrequencyBin::Above10k => "above 10K",
            FrequencyBin::From1kTo10k => "1K-10K",
            FrequencyBin::From100To1k => "100-1K",
            FrequencyBin::Below100 => "below 100",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

/// Per-token-id frequency bin from the training counts.
pub fn frequency_bins(vocab: &Vocab) -> Vec<FrequencyBin> {
    vocab
        .counts()
        .iter()
        .map(|&c| FrequencyBin::of_count(c))
        .collect()
}
