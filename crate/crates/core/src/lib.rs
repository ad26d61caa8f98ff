//! Multi-timescale LSTM language modeling laboratory.
//!
//! The crate implements a small, fully deterministic stack for studying how
//! the forget-gate bias sets the memory timescale of individual LSTM units:
//!
//! * [`mathkernel`] — dense f64 matrices, an LSTM layer with hand-derived
//!   backward pass, tied-softmax and sigmoid-MSE losses, gradient checking.
//! * [`timescale`] — the bias/timescale calculus, the Inverse Gamma
//!   distribution (pdf/cdf/quantile/sampler), deterministic timescale
//!   assignment, and the mixture-of-exponentials decay integral.
//! * [`corpus`] — word-level corpora, stateful batch plans, the bigram
//!   Markov control corpus, and word-frequency bins.
//! * [`dyck`] — the Dyck-2 probabilistic grammar: generation, exact
//!   next-closer targets, matched-pair distances, dataset files.
//! * [`model`] — the language model and the Dyck model, initialization,
//!   and the checkpoint container.
//! * [`train`] — SGD with non-monotonically triggered averaging, Adam,
//!   and the two training loops.
//! * [`analysis`] — perplexity by frequency bin, block bootstrap CIs,
//!   gate-trace timescale estimation, KS distribution fits, unit ablation,
//!   word-ablation decay curves, and Dyck accuracy by timescale.
//!
//! Everything is seeded and single-threaded by default; a given
//! (config, seed) pair reproduces every artifact bit for bit.

pub mod analysis;
pub mod corpus;
pub mod dyck;
pub mod mathkernel;
pub mod model;
pub mod timescale;
pub mod train;

mod error;

pub use error::{Error, Result};
