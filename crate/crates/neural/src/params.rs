//! Named parameter storage and its binding onto a [`Tape`].

use std::collections::HashMap;
use std::ops::Index;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{NeuralError, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Position of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Ordered map from parameter name to tensor. Insertion order is the
/// canonical order for gradients, checkpoints and fingerprints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NeuralError::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, value, trainable });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Replaces a value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| NeuralError::UnknownParam(name.to_string()))?;
        let p = &mut self.params[i];
        if p.value.shape() != value.shape() {
            return Err(NeuralError::Shape {
                op: "ParamStore::set",
                detail: format!("`{name}` is {:?}, got {:?}", p.value.shape(), value.shape()),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn set_trainable(&mut self, name: &str, trainable: bool) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| NeuralError::UnknownParam(name.to_string()))?;
        self.params[i].trainable = trainable;
        Ok(())
    }

    /// Copies every parameter of `other` whose name starts with `prefix`
    /// into `self`. Returns how many were copied.
    pub fn load_prefixed(&mut self, other: &ParamStore, prefix: &str) -> Result<usize> {
        let mut n = 0;
        for p in other.iter().filter(|p| p.name.starts_with(prefix)) {
            self.set(&p.name, p.value.clone())?;
            n += 1;
        }
        Ok(n)
    }

    /// Records every parameter as a leaf. Frozen parameters become
    /// constants.
    pub fn bind(&self, tape: &mut Tape) -> ParamVars {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if p.trainable {
                    tape.var(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        ParamVars { vars }
    }

    pub fn zero_grads(&self) -> GradSet {
        GradSet(self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect())
    }

    /// SHA-256 over names, shapes, trainable flags and value bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            h.update([0u8, p.trainable as u8]);
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }
}

/// Tape handles for each parameter, in store order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Extracts gradients for every bound parameter.
    pub fn collect(&self, grads: &Gradients) -> GradSet {
        GradSet(self.vars.iter().map(|&v| grads.wrt(v)).collect())
    }
}

impl Index<ParamId> for ParamVars {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// One gradient tensor per parameter, aligned with store order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradSet(pub Vec<Tensor>);

impl GradSet {
    pub fn tensors(&self) -> &[Tensor] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }

    pub fn dot(&self, other: &GradSet) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.dot(b)).sum()
    }

    /// `(1/n) Σ weight_i · g_i`, accumulated in the given order.
    pub fn weighted_mean(grads: &[GradSet], weights: &[f64]) -> GradSet {
        assert_eq!(grads.len(), weights.len());
        assert!(!grads.is_empty());
        let mut acc: Vec<Tensor> = grads[0].0.iter().map(|t| Tensor::zeros(t.shape())).collect();
        for (g, &w) in grads.iter().zip(weights) {
            for (a, t) in acc.iter_mut().zip(&g.0) {
                a.add_scaled(t, w);
            }
        }
        let n = grads.len() as f64;
        for a in &mut acc {
            for v in a.data_mut() {
                *v /= n;
            }
        }
        GradSet(acc)
    }
}

/// Uniform `(-bound, bound)` initialisation.
pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if bound > 0.0 {
        for v in t.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    t
}
