use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GradView, ParamMut, ParamView};
use crate::dyck::DyckSequence;
use crate::mathkernel::{sigmoid, sigmoid_mse, LstmGrads, LstmLayer, Matrix};
use crate::timescale::{assign_timescales, AssignMode, TimescaleAssignment, TimescaleSpec};
use crate::{Error, Result};

/// Bracket alphabet order used for one-hot encoding.
const ALPHABET: [char; 4] = ['(', ')', '[', ']'];

/// Gate-bias regime of the Dyck model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum DyckBiasMode {
    Trainable,
    InverseGamma { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyckModelConfig {
    pub hidden_size: usize,
    pub bias_mode: DyckBiasMode,
}

/// One recurrent layer over one-hot brackets followed by a linear head to
/// the two possible closers; outputs pass through a sigmoid at the loss.
#[derive(Debug, Clone)]
pub struct DyckModel {
    pub config: DyckModelConfig,
    pub layer: LstmLayer,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
    pub spec: Option<TimescaleSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DyckModelGrads {
    pub layer: LstmGrads,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl DyckModelGrads {
    pub fn zero(&mut self) {
        self.layer.zero();
        self.w_out.fill(0.0);
        self.b_out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Builds the Dyck model; multi-timescale mode freezes gate biases from
/// InverseGamma(alpha, 1) quantiles.
pub fn build_dyck_model(config: &DyckModelConfig, seed: u64) -> Result<DyckModel> {
    if config.hidden_size < 2 {
        return Err(Error::InvalidParameter {
            name: "hidden_size",
            reason: "need at least two units".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.hidden_size;
    let mut layer = LstmLayer::new(4, h);
    let range = 1.0 / h as f64;
    layer.init_uniform(range, &mut rng);
    let spec = match config.bias_mode {
        DyckBiasMode::Trainable => None,
        DyckBiasMode::InverseGamma { alpha } => {
            let spec = assign_timescales(
                h,
                TimescaleAssignment::InverseGamma {
                    alpha,
                    mode: AssignMode::Quantile,
                },
                seed,
            )?;
            layer.set_fixed_gate_biases(spec.forget_biases(), spec.input_biases())?;
            Some(spec)
        }
    };
    let w_out = Matrix::uniform(2, h, range, &mut rng);
    let b_out = vec![rng.random_range(-range..=range), rng.random_range(-range..=range)];
    Ok(DyckModel {
        config: *config,
        layer,
        w_out,
        b_out,
        spec,
        seed,
    })
}

fn one_hot(c: char) -> Result<Matrix> {
    let idx = ALPHABET
        .iter()
        .position(|&a| a == c)
        .ok_or_else(|| Error::InvalidBrackets(format!("invalid symbol {c:?}")))?;
    let mut x = Matrix::zeros(1, 4);
    x.set(0, idx, 1.0);
    Ok(x)
}

fn targets_matrix(targets: &[(bool, bool)]) -> Matrix {
    let mut m = Matrix::zeros(targets.len(), 2);
    for (t, &(a, b)) in targets.iter().enumerate() {
        m.set(t, 0, if a { 1.0 } else { 0.0 });
        m.set(t, 1, if b { 1.0 } else { 0.0 });
    }
    m
}

impl DyckModel {
    pub fn zero_grads(&self) -> DyckModelGrads {
        DyckModelGrads {
            layer: LstmGrads::zeros(4, self.config.hidden_size),
            w_out: Matrix::zeros(2, self.config.hidden_size),
            b_out: vec![0.0; 2],
        }
    }

    /// Raw head logits for every step of a sequence, no caching.
    pub fn logits(&self, symbols: &str) -> Result<Matrix> {
        let h = self.config.hidden_size;
        let mut hidden = Matrix::zeros(1, h);
        let mut cell = Matrix::zeros(1, h);
        let mut out = Matrix::zeros(symbols.chars().count(), 2);
        for (t, ch) in symbols.chars().enumerate() {
            let x = one_hot(ch)?;
            let step = self.layer.infer_step(&x, &hidden, &cell)?;
            hidden = step.h;
            cell = step.c;
            let mut logits = hidden.matmul_nt(&self.w_out)?;
            logits.add_row_bias(&self.b_out)?;
            out.set(t, 0, logits.get(0, 0));
            out.set(t, 1, logits.get(0, 1));
        }
        Ok(out)
    }

    /// Thresholded predictions per step: `σ(logit) > threshold`.
    pub fn predict(&self, symbols: &str, threshold: f64) -> Result<Vec<(bool, bool)>> {
        let logits = self.logits(symbols)?;
        Ok((0..logits.rows())
            .map(|t| {
                (
                    sigmoid(logits.get(t, 0)) > threshold,
                    sigmoid(logits.get(t, 1)) > threshold,
                )
            })
            .collect())
    }

    /// Forward + backward over one sequence (full-sequence BPTT, batch of
    /// one). Returns the mean squared error; gradients accumulate.
    pub fn train_sequence(
        &mut self,
        seq: &DyckSequence,
        grads: &mut DyckModelGrads,
    ) -> Result<f64> {
        if seq.symbols.is_empty() {
            return Err(Error::EmptyInput("dyck sequence"));
        }
        let h = self.config.hidden_size;
        self.layer.reset_cache();
        let mut hidden = Matrix::zeros(1, h);
        let mut cell = Matrix::zeros(1, h);
        let steps: Vec<char> = seq.symbols.chars().collect();
        let mut hiddens: Vec<Matrix> = Vec::with_capacity(steps.len());
        let mut outputs = Matrix::zeros(steps.len(), 2);
        for (t, &ch) in steps.iter().enumerate() {
            let x = one_hot(ch)?;
            let (nh, nc) = self.layer.forward_step(&x, &hidden, &cell)?;
            hidden = nh.clone();
            cell = nc;
            let mut logits = hidden.matmul_nt(&self.w_out)?;
            logits.add_row_bias(&self.b_out)?;
            outputs.set(t, 0, logits.get(0, 0));
            outputs.set(t, 1, logits.get(0, 1));
            hiddens.push(nh);
        }
        let targets = targets_matrix(&seq.targets);
        let (loss, d_out) = sigmoid_mse(&outputs, &targets)?;

        // Head gradients and per-step upstream dL/dh.
        let mut upstream: Vec<Matrix> = Vec::with_capacity(steps.len());
        for t in 0..steps.len() {
            let drow = Matrix::from_vec(1, 2, d_out.row(t).to_vec())?;
            drow.matmul_tn_acc(&hiddens[t], &mut grads.w_out)?;
            for (b, v) in grads.b_out.iter_mut().zip(d_out.row(t)) {
                *b += v;
            }
            upstream.push(drow.matmul_nn(&self.w_out)?);
        }
        self.layer.backward(&upstream, &mut grads.layer)?;
        Ok(loss)
    }

    /// Mean loss over a set of sequences without gradient work.
    pub fn eval_loss(&self, sequences: &[DyckSequence]) -> Result<f64> {
        if sequences.is_empty() {
            return Err(Error::EmptyInput("dyck evaluation set"));
        }
        let mut total = 0.0;
        for seq in sequences {
            let logits = self.logits(&seq.symbols)?;
            let targets = targets_matrix(&seq.targets);
            let (loss, _) = sigmoid_mse(&logits, &targets)?;
            total += loss;
        }
        Ok(total / sequences.len() as f64)
    }

    pub fn param_views(&self) -> Vec<ParamView<'_>> {
        let frozen = self.layer.bias_frozen;
        vec![
            ParamView { name: "layer0.w_ix".into(), frozen: false, shape: self.layer.w_ix.shape(), values: self.layer.w_ix.data() },
            ParamView { name: "layer0.w_ih".into(), frozen: false, shape: self.layer.w_ih.shape(), values: self.layer.w_ih.data() },
            ParamView { name: "layer0.w_fx".into(), frozen: false, shape: self.layer.w_fx.shape(), values: self.layer.w_fx.data() },
            ParamView { name: "layer0.w_fh".into(), frozen: false, shape: self.layer.w_fh.shape(), values: self.layer.w_fh.data() },
            ParamView { name: "layer0.w_cx".into(), frozen: false, shape: self.layer.w_cx.shape(), values: self.layer.w_cx.data() },
            ParamView { name: "layer0.w_ch".into(), frozen: false, shape: self.layer.w_ch.shape(), values: self.layer.w_ch.data() },
            ParamView { name: "layer0.b_i".into(), frozen, shape: (1, self.layer.b_i.len()), values: &self.layer.b_i },
            ParamView { name: "layer0.b_f".into(), frozen, shape: (1, self.layer.b_f.len()), values: &self.layer.b_f },
            ParamView { name: "layer0.b_c".into(), frozen: false, shape: (1, self.layer.b_c.len()), values: &self.layer.b_c },
            ParamView { name: "w_out".into(), frozen: false, shape: self.w_out.shape(), values: self.w_out.data() },
            ParamView { name: "b_out".into(), frozen: false, shape: (1, self.b_out.len()), values: &self.b_out },
        ]
    }

    pub fn param_muts(&mut self) -> Vec<ParamMut<'_>> {
        let frozen = self.layer.bias_frozen;
        vec![
            ParamMut { name: "layer0.w_ix".into(), frozen: false, values: self.layer.w_ix.data_mut() },
            ParamMut { name: "layer0.w_ih".into(), frozen: false, values: self.layer.w_ih.data_mut() },
            ParamMut { name: "layer0.w_fx".into(), frozen: false, values: self.layer.w_fx.data_mut() },
            ParamMut { name: "layer0.w_fh".into(), frozen: false, values: self.layer.w_fh.data_mut() },
            ParamMut { name: "layer0.w_cx".into(), frozen: false, values: self.layer.w_cx.data_mut() },
            ParamMut { name: "layer0.w_ch".into(), frozen: false, values: self.layer.w_ch.data_mut() },
            ParamMut { name: "layer0.b_i".into(), frozen, values: &mut self.layer.b_i },
            ParamMut { name: "layer0.b_f".into(), frozen, values: &mut self.layer.b_f },
            ParamMut { name: "layer0.b_c".into(), frozen: false, values: &mut self.layer.b_c },
            ParamMut { name: "w_out".into(), frozen: false, values: self.w_out.data_mut() },
            ParamMut { name: "b_out".into(), frozen: false, values: &mut self.b_out },
        ]
    }
}

impl DyckModelGrads {
    pub fn grad_views(&self) -> Vec<GradView<'_>> {
        vec![
            GradView { name: "layer0.w_ix".into(), values: self.layer.w_ix.data() },
            GradView { name: "layer0.w_ih".into(), values: self.layer.w_ih.data() },
            GradView { name: "layer0.w_fx".into(), values: self.layer.w_fx.data() },
            GradView { name: "layer0.w_fh".into(), values: self.layer.w_fh.data() },
            GradView { name: "layer0.w_cx".into(), values: self.layer.w_cx.data() },
            GradView { name: "layer0.w_ch".into(), values: self.layer.w_ch.data() },
            GradView { name: "layer0.b_i".into(), values: &self.layer.b_i },
            GradView { name: "layer0.b_f".into(), values: &self.layer.b_f },
            GradView { name: "layer0.b_c".into(), values: &self.layer.b_c },
            GradView { name: "w_out".into(), values: self.w_out.data() },
            GradView { name: "b_out".into(), values: &self.b_out },
        ]
    }
}

use rand::Rng;
