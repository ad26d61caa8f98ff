//! The Dyck-2 probabilistic grammar over `(`, `)`, `[`, `]`:
//!
//! ```text
//! S → (S)  with probability p1
//! S → [S]  with probability p2
//! S → SS   with probability q
//! S → ε    otherwise
//! ```
//!
//! A uniform draw u selects the rule by interval: `u < p1` → `(S)`,
//! `u < p1+p2` → `[S]`, `u < p1+p2+q` → `SS`, else ε. The mapping is fixed
//! so stub-RNG tests stay portable. Matched-pair distances define the
//! timescales present in a sequence.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{dataset_from_jsonl, load_dyck_jsonl, save_dyck_jsonl};

/// Rule probabilities and the length cap used during generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyckGrammarParams {
    pub p1: f64,
    pub p2: f64,
    pub q: f64,
    pub max_len: usize,
}

impl Default for DyckGrammarParams {
    fn default() -> Self {
        DyckGrammarParams {
            p1: 0.25,
            p2: 0.25,
            q: 0.25,
            max_len: 200,
        }
    }
}

impl DyckGrammarParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p1", self.p1), ("p2", self.p2), ("q", self.q)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "grammar probability",
                    reason: format!("{name} must lie in (0,1), got {v}"),
                });
            }
        }
        if self.p1 + self.p2 + self.q >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "grammar probability",
                reason: format!(
                    "p1+p2+q must be below 1, got {}",
                    self.p1 + self.p2 + self.q
                ),
            });
        }
        if self.max_len == 0 {
            return Err(Error::InvalidParameter {
                name: "max_len",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// One generated sequence with its supervision targets and pair distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DyckSequence {
    pub symbols: String,
    /// Per step: one-hot of the valid next closer `(can ")", can "]")`, or
    /// `(false, false)` on an empty stack.
    pub targets: Vec<(bool, bool)>,
    /// Matched-pair distances ordered by opening index.
    pub distances: Vec<usize>,
    pub max_distance: usize,
}

impl DyckSequence {
    pub fn from_symbols(symbols: String) -> Result<Self> {
        let targets = dyck_targets(&symbols)?;
        let distances = pair_distances(&symbols)?;
        let max_distance = distances.iter().copied().max().unwrap_or(0);
        Ok(DyckSequence {
            symbols,
            targets,
            distances,
            max_distance,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Train/valid/test splits.
#[derive(Debug, Clone)]
pub struct DyckDataset {
    pub train: Vec<DyckSequence>,
    pub valid: Vec<DyckSequence>,
    pub test: Vec<DyckSequence>,
    pub params: DyckGrammarParams,
    pub seed: u64,
}

const GENERATION_ATTEMPTS: usize = 10_000;
const WORK_STACK_CAP: usize = 10_000;

/// Work items for the leftmost-first expansion; no recursion so deep SS
/// chains cannot overflow the call stack.
enum WorkItem {
    Symbol(char),
    Expand,
}

/// Expands S once. `None` when the expansion is empty, too long, or too
/// deep.
fn try_generate(params: &DyckGrammarParams, draw: &mut impl FnMut() -> f64) -> Option<String> {
    let mut out = String::new();
    let mut work = vec![WorkItem::Expand];
    while let Some(item) = work.pop() {
        match item {
            WorkItem::Symbol(c) => out.push(c),
            WorkItem::Expand => {
                let u = draw();
                if u < params.p1 {
                    out.push('(');
                    work.push(WorkItem::Symbol(')'));
                    work.push(WorkItem::Expand);
                } else if u < params.p1 + params.p2 {
                    out.push('[');
                    work.push(WorkItem::Symbol(']'));
                    work.push(WorkItem::Expand);
                } else if u < params.p1 + params.p2 + params.q {
                    work.push(WorkItem::Expand);
                    work.push(WorkItem::Expand);
                } // else ε: emit nothing
            }
        }
        if out.len() > params.max_len || work.len() > WORK_STACK_CAP {
            return None;
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// Draws one sequence, rejecting empty or over-long expansions; gives up
/// with an error after a bounded number of attempts.
pub fn generate_dyck(
    params: &DyckGrammarParams,
    draw: &mut impl FnMut() -> f64,
) -> Result<DyckSequence> {
    params.validate()?;
    for _ in 0..GENERATION_ATTEMPTS {
        if let Some(symbols) = try_generate(params, draw) {
            return DyckSequence::from_symbols(symbols);
        }
    }
    Err(Error::GenerationFailed {
        attempts: GENERATION_ATTEMPTS,
    })
}

/// Seeded convenience wrapper around [`generate_dyck`].
pub fn generate_dyck_seeded(params: &DyckGrammarParams, seed: u64) -> Result<DyckSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_dyck(params, &mut || rng.random())
}

/// Stack simulation: after consuming each symbol, the target is the one-hot
/// of the closer matching the top of stack, or `(false, false)` when the
/// stack is empty. The prefix must be valid (no mismatched or extra
/// closers).
pub fn dyck_targets(symbols: &str) -> Result<Vec<(bool, bool)>> {
    let mut stack: Vec<char> = Vec::new();
    let mut targets = Vec::with_capacity(symbols.len());
    for (i, c) in symbols.chars().enumerate() {
        match c {
            '(' => stack.push(')'),
            '[' => stack.push(']'),
            ')' | ']' => match stack.pop() {
                Some(expected) if expected == c => {}
                _ => {
                    return Err(Error::InvalidBrackets(format!(
                        "unexpected {c:?} at position {i}"
                    )))
                }
            },
            other => {
                return Err(Error::InvalidBrackets(format!(
                    "invalid symbol {other:?} at position {i}"
                )))
            }
        }
        targets.push(match stack.last() {
            Some(')') => (true, false),
            Some(']') => (false, true),
            Some(_) => unreachable!("stack holds closers only"),
            None => (false, false),
        });
    }
    Ok(targets)
}

/// Distance between each matched pair (`close index - open index`), ordered
/// by opening index. The string must be fully balanced.
pub fn pair_distances(symbols: &str) -> Result<Vec<usize>> {
    let mut stack: Vec<(usize, char, usize)> = Vec::new(); // (open idx, closer, order)
    let mut out: Vec<(usize, usize)> = Vec::new(); // (order, distance)
    let mut order = 0;
    for (i, c) in symbols.chars().enumerate() {
        match c {
            '(' | '[' => {
                let closer = if c == '(' { ')' } else { ']' };
                stack.push((i, closer, order));
                order += 1;
            }
            ')' | ']' => match stack.pop() {
                Some((open, expected, ord)) if expected == c => out.push((ord, i - open)),
                _ => {
                    return Err(Error::InvalidBrackets(format!(
                        "unexpected {c:?} at position {i}"
                    )))
                }
            },
            other => {
                return Err(Error::InvalidBrackets(format!(
                    "invalid symbol {other:?} at position {i}"
                )))
            }
        }
    }
    if !stack.is_empty() {
        return Err(Error::InvalidBrackets(format!(
            "{} unclosed brackets at end of input",
            stack.len()
        )));
    }
    out.sort_by_key(|&(ord, _)| ord);
    Ok(out.into_iter().map(|(_, d)| d).collect())
}

/// Generates the three splits with disjoint RNG streams: each sequence owns
/// the ChaCha stream `(split_tag << 32) | sequence_index` under the shared
/// seed, so splits are independent and generation order never matters.
pub fn build_dyck_dataset(
    params: &DyckGrammarParams,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
    seed: u64,
) -> Result<DyckDataset> {
    params.validate()?;
    if n_train == 0 || n_valid == 0 || n_test == 0 {
        return Err(Error::EmptyInput("dyck dataset split counts"));
    }
    let generate_split = |split_tag: u64, n: usize| -> Result<Vec<DyckSequence>> {
        (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((split_tag << 32) | i as u64);
                generate_dyck(params, &mut || rng.random())
            })
            .collect()
    };
    Ok(DyckDataset {
        train: generate_split(0, n_train)?,
        valid: generate_split(1, n_valid)?,
        test: generate_split(2, n_test)?,
        params: *params,
        seed,
    })
}
