use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Training windows are length 70 with probability 0.95 and 35 otherwise;
/// evaluation windows are always 70 (plus a short final window).
const LONG_WINDOW: usize = 70;
const SHORT_WINDOW: usize = 35;
const LONG_PROB: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Train,
    Eval,
}

/// One BPTT window within every stream: `len` predicted positions starting
/// at stream offset `offset` (inputs `offset..offset+len`, targets shifted
/// by one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub offset: usize,
    pub len: usize,
}

/// Stateful batch layout: the token array reshaped into `batch_size`
/// contiguous streams of `stream_len` tokens, tiled by `windows` without
/// gaps or overlap. Hidden state carries across consecutive windows of the
/// same stream.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub stream_len: usize,
    pub windows: Vec<Window>,
    pub mode: BatchMode,
    pub seed: u64,
}

impl BatchPlan {
    /// Predicted tokens per stream; the final token of each stream has no
    /// target and is not predicted.
    pub fn predicted_per_stream(&self) -> usize {
        self.windows.iter().map(|w| w.len).sum()
    }
}

/// Lays out `n_tokens` into `batch_size` streams and tiles each stream with
/// windows. Train mode draws window lengths from the seeded RNG; eval mode
/// is seed-independent.
pub fn make_batch_plan(
    n_tokens: usize,
    batch_size: usize,
    mode: BatchMode,
    seed: u64,
) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter {
            name: "batch_size",
            reason: "must be at least 1".into(),
        });
    }
    if n_tokens <= batch_size {
        return Err(Error::InvalidParameter {
            name: "batch_size",
            reason: format!("batch size {batch_size} too large for {n_tokens} tokens"),
        });
    }
    let stream_len = n_tokens / batch_size;
    let windows = match mode {
        BatchMode::Eval => tile_windows(stream_len, &mut || LONG_WINDOW),
        BatchMode::Train => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = move || {
                let u: f64 = rng.random();
                if u < LONG_PROB {
                    LONG_WINDOW
                } else {
                    SHORT_WINDOW
                }
            };
            tile_windows(stream_len, &mut draw)
        }
    };
    Ok(BatchPlan {
        batch_size,
        stream_len,
        windows,
        mode,
        seed,
    })
}

/// Tiles the `stream_len - 1` predictable positions, clipping the final
/// window short. Exposed shape of the drawing function keeps stub-RNG tests
/// portable.
fn tile_windows(stream_len: usize, draw_len: &mut impl FnMut() -> usize) -> Vec<Window> {
    let mut windows = Vec::new();
    let predictable = stream_len.saturating_sub(1);
    let mut offset = 0;
    while offset < predictable {
        let want = draw_len();
        let len = want.min(predictable - offset);
        windows.push(Window { offset, len });
        offset += len;
    }
    windows
}

/// Step-major id block for one window across all streams:
/// `inputs[t * batch + b]` feeds step `t` of stream `b`,
/// `targets[t * batch + b]` is the token it should predict.
#[derive(Debug, Clone)]
pub struct TokenWindow {
    pub steps: usize,
    pub batch: usize,
    pub inputs: Vec<u32>,
    pub targets: Vec<u32>,
}

/// Gathers one window from the flat token array under a plan's stream
/// layout.
pub fn extract_window(tokens: &[u32], plan: &BatchPlan, window: Window) -> Result<TokenWindow> {
    let needed = plan.batch_size * plan.stream_len;
    if tokens.len() < needed {
        return Err(Error::ShapeMismatch {
            context: "extract_window",
            expected: format!("at least {needed} tokens"),
            got: format!("{}", tokens.len()),
        });
    }
    if window.offset + window.len + 1 > plan.stream_len {
        return Err(Error::ShapeMismatch {
            context: "extract_window window bounds",
            expected: format!("within stream of {}", plan.stream_len),
            got: format!("offset {} len {}", window.offset, window.len),
        });
    }
    let mut inputs = Vec::with_capacity(window.len * plan.batch_size);
    let mut targets = Vec::with_capacity(window.len * plan.batch_size);
    for t in 0..window.len {
        for b in 0..plan.batch_size {
            let base = b * plan.stream_len + window.offset + t;
            inputs.push(tokens[base]);
            targets.push(tokens[base + 1]);
        }
    }
    Ok(TokenWindow {
        steps: window.len,
        batch: plan.batch_size,
        inputs,
        targets,
    })
}
