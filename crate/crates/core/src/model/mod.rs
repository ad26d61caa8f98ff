//! Model assembly: the word-level language model (baseline or
//! multi-timescale), the Dyck-2 model, parameter traversal for optimizers
//! and checkpoints, and the checkpoint container.

mod checkpoint;
mod dyck_model;
mod lm;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_bytes, save_checkpoint, CheckpointModel, LoadedCheckpoint,
    RngState, TrainerSnapshot, CHECKPOINT_VERSION,
};
pub use dyck_model::{build_dyck_model, DyckBiasMode, DyckModel, DyckModelConfig, DyckModelGrads};
pub use lm::{
    build_lm, AblationMask, EvalHooks, LanguageModel, LayerTimescales, LmConfig, LmGrads, LmState,
};

/// Read-only view of one parameter buffer.
pub struct ParamView<'a> {
    pub name: String,
    pub frozen: bool,
    /// Matrix shape; vectors report `(1, len)`.
    pub shape: (usize, usize),
    pub values: &'a [f64],
}

/// Mutable view of one parameter buffer.
pub struct ParamMut<'a> {
    pub name: String,
    pub frozen: bool,
    pub values: &'a mut [f64],
}

/// Read-only view of one gradient buffer (same order as the params).
pub struct GradView<'a> {
    pub name: String,
    pub values: &'a [f64],
}
