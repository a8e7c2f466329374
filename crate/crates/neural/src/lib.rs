//! Minimal differentiable-computation engine for sequence classifiers.
//!
//! [`Tape`] records operations over [`Tensor`] values and runs exact
//! reverse-mode differentiation. Layers ([`GruCell`], [`LinearHead`],
//! [`ConvPool`]) keep their tensors in a [`ParamStore`] and are evaluated
//! against a [`ParamVars`] binding, so the same forward code serves
//! ordinary training and differentiating through a lookahead update.

pub mod checkpoint;
mod error;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{NeuralError, Result};
pub use layers::{Activation, ConvPool, GruCell, LinearHead};
pub use optim::{sgd_commit, sgd_lookahead};
pub use params::{GradSet, Param, ParamId, ParamStore, ParamVars};
pub use tape::{Gradients, Tape, Var, PROB_EPS};
pub use tensor::Tensor;
