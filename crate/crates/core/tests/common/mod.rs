#![allow(dead_code)]

use clickcfa::data::{default_archetypes, generate_synthetic, split_folds, Corpus};
use clickcfa::model::LossModel;
use clickcfa::Result;
use clickcfa_neural::{Activation, LinearHead, ParamStore, ParamVars, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// One parameter `w`, loss `0.5 (w - x)^2`.
pub struct Scalar {
    pub store: ParamStore,
}

impl Scalar {
    pub fn new(w: f64) -> Self {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::vector(vec![w]), true).unwrap();
        Self { store }
    }

    pub fn w(&self) -> f64 {
        self.store.get("w").unwrap().item()
    }
}

impl LossModel for Scalar {
    type Sample = f64;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn sample_loss(&self, tape: &mut Tape, p: &ParamVars, x: &f64) -> Result<Var> {
        let id = self.store.id("w").unwrap();
        let c = tape.constant(Tensor::vector(vec![*x]));
        let d = tape.sub(p[id], c)?;
        let sq = tape.mul(d, d)?;
        let s = tape.sum(sq);
        Ok(tape.scale(s, 0.5))
    }
}

/// `x -> sigmoid(linear) -> softmax(linear)`, cross-entropy loss.
pub struct TwoLayer {
    pub store: ParamStore,
    pub l1: LinearHead,
    pub l2: LinearHead,
}

impl TwoLayer {
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let l1 = LinearHead::new(&mut store, "l1", input, hidden, Activation::Sigmoid, &mut r).unwrap();
        let l2 = LinearHead::new(&mut store, "l2", hidden, 2, Activation::Softmax, &mut r).unwrap();
        Self { store, l1, l2 }
    }
}

impl LossModel for TwoLayer {
    type Sample = (Tensor, Tensor);

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn sample_loss(&self, tape: &mut Tape, p: &ParamVars, s: &(Tensor, Tensor)) -> Result<Var> {
        let x = tape.constant(s.0.clone());
        let h = self.l1.forward(tape, p, x)?;
        let y = self.l2.forward(tape, p, h)?;
        Ok(tape.bce(y, &s.1)?)
    }
}

pub fn toy_samples(n: usize, input: usize, seed: u64) -> Vec<(Tensor, Tensor)> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..input).map(|_| r.random_range(-1.5..1.5)).collect();
            let pos = x.iter().sum::<f64>() > 0.0;
            let t = if pos { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
            (Tensor::vector(x), Tensor::vector(t))
        })
        .collect()
}

/// Default two-archetype corpus with folds assigned.
pub fn synthetic(n: usize, seed: u64, folds: usize) -> Corpus {
    let mut c = generate_synthetic(&default_archetypes(), n, seed).unwrap();
    split_folds(&mut c, folds, seed, false).unwrap();
    c
}
