use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GradView, ParamMut, ParamView};
use crate::mathkernel::{
    cross_entropy_tied_softmax, tied_softmax_losses, LstmGrads, LstmLayer, Matrix,
};
use crate::corpus::TokenWindow;
use crate::timescale::{assign_timescales, AssignMode, TimescaleAssignment, TimescaleSpec};
use crate::{Error, Result};

/// Per-layer gate-bias regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LayerTimescales {
    /// Biases initialized uniformly and learned.
    Trainable,
    /// Biases fixed from an explicit timescale list.
    Fixed { timescales: Vec<f64> },
    /// Biases fixed from InverseGamma(alpha, 1).
    InverseGamma { alpha: f64, assign: AssignMode },
}

/// Architecture and initialization of a language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub layer_timescales: Vec<LayerTimescales>,
    pub tie_embeddings: bool,
    /// Embedding init is uniform in ±this; LSTM weights and trainable
    /// biases use ±1/H with H the layer's output size.
    pub embed_init_range: f64,
}

impl LmConfig {
    /// The reference architecture: three layers, 1150/1150/400 units,
    /// 400-wide tied embeddings, every bias trainable.
    pub fn baseline(vocab_size: usize) -> Self {
        LmConfig {
            vocab_size,
            embed_dim: 400,
            layer_sizes: vec![1150, 1150, 400],
            layer_timescales: vec![
                LayerTimescales::Trainable,
                LayerTimescales::Trainable,
                LayerTimescales::Trainable,
            ],
            tie_embeddings: true,
            embed_init_range: 0.1,
        }
    }

    /// The multi-timescale variant: layer 1 fixed half at T=3 / half at
    /// T=4, layer 2 fixed from InverseGamma(0.56), layer 3 trainable.
    pub fn multi_timescale(vocab_size: usize) -> Self {
        let mut cfg = Self::baseline(vocab_size);
        let n1 = cfg.layer_sizes[0];
        let mut first = vec![3.0; n1 - n1 / 2];
        first.extend(vec![4.0; n1 / 2]);
        cfg.layer_timescales = vec![
            LayerTimescales::Fixed { timescales: first },
            LayerTimescales::InverseGamma {
                alpha: 0.56,
                assign: AssignMode::Quantile,
            },
            LayerTimescales::Trainable,
        ];
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::InvalidParameter {
                name: "vocab_size",
                reason: "need at least two tokens".into(),
            });
        }
        if self.layer_sizes.is_empty() || self.layer_sizes.len() != self.layer_timescales.len() {
            return Err(Error::InvalidParameter {
                name: "layer_sizes",
                reason: format!(
                    "need one timescale mode per layer ({} sizes, {} modes)",
                    self.layer_sizes.len(),
                    self.layer_timescales.len()
                ),
            });
        }
        if self.tie_embeddings && *self.layer_sizes.last().unwrap() != self.embed_dim {
            return Err(Error::InvalidParameter {
                name: "layer_sizes",
                reason: format!(
                    "tied embeddings require last layer width {} to equal embed_dim {}",
                    self.layer_sizes.last().unwrap(),
                    self.embed_dim
                ),
            });
        }
        if !(self.embed_init_range > 0.0) {
            return Err(Error::InvalidParameter {
                name: "embed_init_range",
                reason: "must be positive".into(),
            });
        }
        for (i, lt) in self.layer_timescales.iter().enumerate() {
            if let LayerTimescales::Fixed { timescales } = lt {
                if timescales.len() != self.layer_sizes[i] {
                    return Err(Error::InvalidParameter {
                        name: "layer_timescales",
                        reason: format!(
                            "layer {i}: {} fixed timescales for {} units",
                            timescales.len(),
                            self.layer_sizes[i]
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// The reference (paper-scale) presets are exactly three layers; this
    /// is asserted when building from them.
    pub fn validate_reference_arch(&self) -> Result<()> {
        self.validate()?;
        if self.layer_sizes.len() != 3 {
            return Err(Error::InvalidParameter {
                name: "layer_sizes",
                reason: format!("reference architecture has 3 layers, got {}", self.layer_sizes.len()),
            });
        }
        Ok(())
    }
}

/// Carried hidden/cell state, one pair per layer, batch rows.
#[derive(Debug, Clone)]
pub struct LmState {
    pub h: Vec<Matrix>,
    pub c: Vec<Matrix>,
}

/// Gradient buffers for a whole language model.
#[derive(Debug, Clone)]
pub struct LmGrads {
    pub embedding: Matrix,
    pub layers: Vec<LstmGrads>,
}

impl LmGrads {
    pub fn zero(&mut self) {
        self.embedding.fill(0.0);
        for l in &mut self.layers {
            l.zero();
        }
    }
}

/// A stateful word-level language model with a tied softmax decoder: the
/// decoder weight IS the embedding matrix, one shared buffer.
#[derive(Debug, Clone)]
pub struct LanguageModel {
    pub config: LmConfig,
    pub embedding: Matrix,
    pub layers: Vec<LstmLayer>,
    /// Assigned timescales for frozen layers, `None` for trainable ones.
    pub specs: Vec<Option<TimescaleSpec>>,
    pub seed: u64,
}

/// Builds and initializes a model. Per-unit timescale assignment uses
/// deterministic quantile placement unless the config requests sampling;
/// frozen layers get `b_f` from the assignment and `b_i = -b_f` bitwise.
pub fn build_lm(config: &LmConfig, seed: u64) -> Result<LanguageModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embedding = Matrix::uniform(
        config.vocab_size,
        config.embed_dim,
        config.embed_init_range,
        &mut rng,
    );
    let mut layers = Vec::with_capacity(config.layer_sizes.len());
    let mut specs = Vec::with_capacity(config.layer_sizes.len());
    let mut input_size = config.embed_dim;
    for (idx, (&hidden, mode)) in config
        .layer_sizes
        .iter()
        .zip(config.layer_timescales.iter())
        .enumerate()
    {
        let mut layer = LstmLayer::new(input_size, hidden);
        layer.init_uniform(1.0 / hidden as f64, &mut rng);
        let spec = match mode {
            LayerTimescales::Trainable => None,
            LayerTimescales::Fixed { timescales } => Some(assign_timescales(
                hidden,
                TimescaleAssignment::Fixed(timescales.clone()),
                seed ^ idx as u64,
            )?),
            LayerTimescales::InverseGamma { alpha, assign } => Some(assign_timescales(
                hidden,
                TimescaleAssignment::InverseGamma {
                    alpha: *alpha,
                    mode: *assign,
                },
                seed ^ idx as u64,
            )?),
        };
        if let Some(s) = &spec {
            layer.set_fixed_gate_biases(s.forget_biases(), s.input_biases())?;
        }
        layers.push(layer);
        specs.push(spec);
        input_size = hidden;
    }
    Ok(LanguageModel {
        config: config.clone(),
        embedding,
        layers,
        specs,
        seed,
    })
}

/// Hidden-output ablation applied during evaluation: after a layer computes
/// its step, the listed unit outputs are zeroed (the cell state keeps
/// evolving unless `zero_cell` asks otherwise).
#[derive(Debug, Clone)]
pub struct AblationMask {
    pub layer: usize,
    pub units: Vec<usize>,
    pub zero_cell: bool,
}

/// Optional evaluation instrumentation.
#[derive(Default)]
pub struct EvalHooks {
    pub masks: Vec<AblationMask>,
    /// Record forget-gate matrices of this layer, one per step.
    pub gate_layer: Option<usize>,
    pub gates: Vec<Matrix>,
    /// Record post-step cell states of every layer.
    pub record_cells: bool,
    /// `cells[layer][step]` when recording.
    pub cells: Vec<Vec<Matrix>>,
    /// Zero the input embedding at these step indices (word-ablation
    /// variant that removes a word entirely).
    pub zero_embed_steps: Vec<usize>,
}

impl EvalHooks {
    fn apply_masks(&self, layer: usize, h: &mut Matrix, c: &mut Matrix) {
        for mask in self.masks.iter().filter(|m| m.layer == layer) {
            for &u in &mask.units {
                for b in 0..h.rows() {
                    h.set(b, u, 0.0);
                    if mask.zero_cell {
                        c.set(b, u, 0.0);
                    }
                }
            }
        }
    }
}

impl LanguageModel {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_state(&self, batch: usize) -> LmState {
        LmState {
            h: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(batch, l.hidden_size))
                .collect(),
            c: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(batch, l.hidden_size))
                .collect(),
        }
    }

    pub fn zero_grads(&self) -> LmGrads {
        LmGrads {
            embedding: Matrix::zeros(self.config.vocab_size, self.config.embed_dim),
            layers: self
                .layers
                .iter()
                .map(|l| LstmGrads::zeros(l.input_size, l.hidden_size))
                .collect(),
        }
    }

    fn check_state(&self, state: &LmState, batch: usize) -> Result<()> {
        if state.h.len() != self.layers.len() || state.c.len() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                context: "lm state layers",
                expected: format!("{}", self.layers.len()),
                got: format!("{}/{}", state.h.len(), state.c.len()),
            });
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if state.h[l].shape() != (batch, layer.hidden_size)
                || state.c[l].shape() != (batch, layer.hidden_size)
            {
                return Err(Error::ShapeMismatch {
                    context: "lm state",
                    expected: format!("(batch {batch} × {})", layer.hidden_size),
                    got: format!("{:?}", state.h[l].shape()),
                });
            }
        }
        Ok(())
    }

    fn embed_step(&self, window: &TokenWindow, step: usize) -> Result<Matrix> {
        let mut x = Matrix::zeros(window.batch, self.config.embed_dim);
        for b in 0..window.batch {
            let id = window.inputs[step * window.batch + b];
            if id as usize >= self.config.vocab_size {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: self.config.vocab_size,
                });
            }
            x.row_mut(b).copy_from_slice(self.embedding.row(id as usize));
        }
        Ok(x)
    }

    /// Forward + backward over one window under the mean-loss objective.
    /// Gradients accumulate into `grads`; returns the summed token losses
    /// and token count. State is updated for carry-over and is detached at
    /// the window boundary (truncated backpropagation).
    pub fn train_window(
        &mut self,
        window: &TokenWindow,
        state: &mut LmState,
        grads: &mut LmGrads,
    ) -> Result<(f64, usize)> {
        let batch = window.batch;
        self.check_state(state, batch)?;
        let n_tokens = window.steps * batch;
        let scale = 1.0 / n_tokens as f64;
        for layer in &mut self.layers {
            layer.reset_cache();
        }
        let mut cur_h = state.h.clone();
        let mut cur_c = state.c.clone();
        let mut loss_sum = 0.0;
        let mut top_dh: Vec<Matrix> = Vec::with_capacity(window.steps);
        for t in 0..window.steps {
            let mut x = self.embed_step(window, t)?;
            for (l, layer) in self.layers.iter_mut().enumerate() {
                let (h, c) = layer.forward_step(&x, &cur_h[l], &cur_c[l])?;
                cur_h[l] = h.clone();
                cur_c[l] = c;
                x = h;
            }
            let targets = &window.targets[t * batch..(t + 1) * batch];
            let step_loss =
                cross_entropy_tied_softmax(&x, &self.embedding, targets, scale, &mut grads.embedding)?;
            loss_sum += step_loss.losses.iter().sum::<f64>();
            top_dh.push(step_loss.d_hidden);
        }

        // Backward through the stack; each layer hands dL/dx to the one
        // below it.
        let mut upstream = top_dh;
        for l in (0..self.layers.len()).rev() {
            upstream = self.layers[l].backward(&upstream, &mut grads.layers[l])?;
        }
        // Embedding-lookup side of the tied buffer.
        for (t, dx) in upstream.iter().enumerate() {
            for b in 0..batch {
                let id = window.inputs[t * batch + b] as usize;
                let row = dx.row(b);
                let erow = grads.embedding.row_mut(id);
                for (e, d) in erow.iter_mut().zip(row.iter()) {
                    *e += d;
                }
            }
        }

        state.h = cur_h;
        state.c = cur_c;
        Ok((loss_sum, n_tokens))
    }

    /// Evaluation over one window: per-token negative log-likelihoods in
    /// step-major order (`losses[t * batch + b]`), state carried forward.
    pub fn eval_window(
        &self,
        window: &TokenWindow,
        state: &mut LmState,
        hooks: &mut EvalHooks,
    ) -> Result<Vec<f64>> {
        let batch = window.batch;
        self.check_state(state, batch)?;
        if hooks.record_cells && hooks.cells.is_empty() {
            hooks.cells = vec![Vec::new(); self.layers.len()];
        }
        for mask in &hooks.masks {
            if mask.layer >= self.layers.len() {
                return Err(Error::InvalidParameter {
                    name: "ablation layer",
                    reason: format!("layer {} out of range", mask.layer),
                });
            }
            if let Some(&u) = mask
                .units
                .iter()
                .find(|&&u| u >= self.layers[mask.layer].hidden_size)
            {
                return Err(Error::InvalidParameter {
                    name: "ablation units",
                    reason: format!("unit {u} out of range for layer {}", mask.layer),
                });
            }
        }
        let mut losses = Vec::with_capacity(window.steps * batch);
        for t in 0..window.steps {
            let mut x = self.embed_step(window, t)?;
            if hooks.zero_embed_steps.contains(&t) {
                x.fill(0.0);
            }
            for (l, layer) in self.layers.iter().enumerate() {
                let step = layer.infer_step(&x, &state.h[l], &state.c[l])?;
                let mut h = step.h;
                let mut c = step.c;
                hooks.apply_masks(l, &mut h, &mut c);
                if hooks.gate_layer == Some(l) {
                    hooks.gates.push(step.f);
                }
                if hooks.record_cells {
                    hooks.cells[l].push(c.clone());
                }
                state.h[l] = h.clone();
                state.c[l] = c;
                x = h;
            }
            let targets = &window.targets[t * batch..(t + 1) * batch];
            losses.extend(tied_softmax_losses(&x, &self.embedding, targets)?);
        }
        Ok(losses)
    }

    /// Stable parameter traversal; checkpoint and optimizer order.
    pub fn param_views(&self) -> Vec<ParamView<'_>> {
        let mut out = vec![ParamView {
            name: "embedding".into(),
            frozen: false,
            shape: self.embedding.shape(),
            values: self.embedding.data(),
        }];
        for (l, layer) in self.layers.iter().enumerate() {
            let frozen = layer.bias_frozen;
            out.push(ParamView { name: format!("layer{l}.w_ix"), frozen: false, shape: layer.w_ix.shape(), values: layer.w_ix.data() });
            out.push(ParamView { name: format!("layer{l}.w_ih"), frozen: false, shape: layer.w_ih.shape(), values: layer.w_ih.data() });
            out.push(ParamView { name: format!("layer{l}.w_fx"), frozen: false, shape: layer.w_fx.shape(), values: layer.w_fx.data() });
            out.push(ParamView { name: format!("layer{l}.w_fh"), frozen: false, shape: layer.w_fh.shape(), values: layer.w_fh.data() });
            out.push(ParamView { name: format!("layer{l}.w_cx"), frozen: false, shape: layer.w_cx.shape(), values: layer.w_cx.data() });
            out.push(ParamView { name: format!("layer{l}.w_ch"), frozen: false, shape: layer.w_ch.shape(), values: layer.w_ch.data() });
            out.push(ParamView { name: format!("layer{l}.b_i"), frozen, shape: (1, layer.b_i.len()), values: &layer.b_i });
            out.push(ParamView { name: format!("layer{l}.b_f"), frozen, shape: (1, layer.b_f.len()), values: &layer.b_f });
            out.push(ParamView { name: format!("layer{l}.b_c"), frozen: false, shape: (1, layer.b_c.len()), values: &layer.b_c });
        }
        out
    }

    pub fn param_muts(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = vec![ParamMut {
            name: "embedding".into(),
            frozen: false,
            values: self.embedding.data_mut(),
        }];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let frozen = layer.bias_frozen;
            out.push(ParamMut { name: format!("layer{l}.w_ix"), frozen: false, values: layer.w_ix.data_mut() });
            out.push(ParamMut { name: format!("layer{l}.w_ih"), frozen: false, values: layer.w_ih.data_mut() });
            out.push(ParamMut { name: format!("layer{l}.w_fx"), frozen: false, values: layer.w_fx.data_mut() });
            out.push(ParamMut { name: format!("layer{l}.w_fh"), frozen: false, values: layer.w_fh.data_mut() });
            out.push(ParamMut { name: format!("layer{l}.w_cx"), frozen: false, values: layer.w_cx.data_mut() });
            out.push(ParamMut { name: format!("layer{l}.w_ch"), frozen: false, values: layer.w_ch.data_mut() });
            out.push(ParamMut { name: format!("layer{l}.b_i"), frozen, values: &mut layer.b_i });
            out.push(ParamMut { name: format!("layer{l}.b_f"), frozen, values: &mut layer.b_f });
            out.push(ParamMut { name: format!("layer{l}.b_c"), frozen: false, values: &mut layer.b_c });
        }
        out
    }
}

impl LmGrads {
    pub fn grad_views(&self) -> Vec<GradView<'_>> {
        let mut out = vec![GradView {
            name: "embedding".into(),
            values: self.embedding.data(),
        }];
        for (l, g) in self.layers.iter().enumerate() {
            out.push(GradView { name: format!("layer{l}.w_ix"), values: g.w_ix.data() });
            out.push(GradView { name: format!("layer{l}.w_ih"), values: g.w_ih.data() });
            out.push(GradView { name: format!("layer{l}.w_fx"), values: g.w_fx.data() });
            out.push(GradView { name: format!("layer{l}.w_fh"), values: g.w_fh.data() });
            out.push(GradView { name: format!("layer{l}.w_cx"), values: g.w_cx.data() });
            out.push(GradView { name: format!("layer{l}.w_ch"), values: g.w_ch.data() });
            out.push(GradView { name: format!("layer{l}.b_i"), values: &g.b_i });
            out.push(GradView { name: format!("layer{l}.b_f"), values: &g.b_f });
            out.push(GradView { name: format!("layer{l}.b_c"), values: &g.b_c });
        }
        out
    }
}
