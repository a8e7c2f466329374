//! GRU, linear and 1-D convolution layers backed by a [`ParamStore`].
//!
//! Layers only remember where their tensors live in the store; the
//! forward functions take a [`ParamVars`] so the same layer runs on plain
//! leaves or on parameters that are themselves recorded expressions.

use rand::Rng;

use crate::error::{shape_err, NeuralError, Result};
use crate::params::{uniform, ParamId, ParamStore, ParamVars};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

impl GruCell {
    /// Registers `{prefix}.w`, `{prefix}.u`, `{prefix}.b`. Weights are
    /// uniform in `±1/sqrt(hidden_dim)`, biases zero.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let g = 3 * hidden_dim;
        let w = store.insert(format!("{prefix}.w"), uniform(&[input_dim, g], bound, rng), true)?;
        let u = store.insert(format!("{prefix}.u"), uniform(&[hidden_dim, g], bound, rng), true)?;
        let b = store.insert(format!("{prefix}.b"), Tensor::zeros(&[g]), true)?;
        Ok(Self {
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        })
    }

    pub fn step(&self, tape: &mut Tape, p: &ParamVars, x: Var, h: Var) -> Result<Var> {
        tape.gru_step(x, h, p[self.w], p[self.u], p[self.b])
    }

    /// Runs the recurrence over the rows of `seq: [L, input_dim]` from
    /// `h0` and returns every hidden state; the last one is `h_L`.
    pub fn forward(&self, tape: &mut Tape, p: &ParamVars, seq: Var, h0: Var) -> Result<Vec<Var>> {
        let shape = tape.shape(seq).to_vec();
        if shape.len() != 2 || shape[0] == 0 {
            return Err(NeuralError::EmptySequence);
        }
        if shape[1] != self.input_dim {
            return shape_err(
                "GruCell::forward",
                format!("rows have {} columns, cell expects {}", shape[1], self.input_dim),
            );
        }
        let mut states = Vec::with_capacity(shape[0]);
        let mut h = h0;
        for i in 0..shape[0] {
            let x = tape.row(seq, i)?;
            h = self.step(tape, p, x, h)?;
            states.push(h);
        }
        Ok(states)
    }

    /// Final state from a zero initial state.
    pub fn encode(&self, tape: &mut Tape, p: &ParamVars, seq: Var) -> Result<Var> {
        let h0 = tape.constant(Tensor::zeros(&[self.hidden_dim]));
        let states = self.forward(tape, p, seq, h0)?;
        Ok(*states.last().expect("non-empty"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
    Softmax,
}

#[derive(Clone, Debug)]
pub struct LinearHead {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl LinearHead {
    /// Weights uniform in `±1/sqrt(in_dim)`, bias zero.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.insert(format!("{prefix}.w"), uniform(&[in_dim, out_dim], bound, rng), true)?;
        let bias = store.insert(format!("{prefix}.b"), Tensor::zeros(&[out_dim]), true)?;
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
            activation,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &ParamVars, x: Var) -> Result<Var> {
        let y = tape.linear(x, p[self.weight], p[self.bias])?;
        Ok(match self.activation {
            Activation::None => y,
            Activation::Relu => tape.relu(y),
            Activation::Sigmoid => tape.sigmoid(y),
            Activation::Softmax => tape.softmax(y)?,
        })
    }
}

/// Same-padded 1-D convolution with ReLU and global max-pooling.
#[derive(Clone, Debug)]
pub struct ConvPool {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvPool {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = width * in_channels;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.insert(
            format!("{prefix}.w"),
            uniform(&[fan_in, out_channels], bound, rng),
            true,
        )?;
        let bias = store.insert(format!("{prefix}.b"), Tensor::zeros(&[out_channels]), true)?;
        Ok(Self {
            in_channels,
            out_channels,
            width,
            weight,
            bias,
        })
    }

    /// `[L, in_channels] -> [out_channels]`.
    pub fn forward(&self, tape: &mut Tape, p: &ParamVars, seq: Var) -> Result<Var> {
        let shape = tape.shape(seq);
        if shape.len() != 2 || shape[0] == 0 {
            return Err(NeuralError::EmptySequence);
        }
        let y = tape.conv1d(seq, p[self.weight], p[self.bias], self.width)?;
        let y = tape.relu(y);
        tape.max_over_time(y)
    }
}
