//! The CFA classifier: a GRU (or 1-D convolution) trunk with a softmax
//! head, plus the sample type shared by every classifier.

use clickcfa_neural::{Activation, ConvPool, GruCell, LinearHead, ParamStore, ParamVars, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clickstream::{CfaLabel, TimeVaryingEncoding};
use crate::error::{Error, Result};

/// Anything trained by minimizing a sum of per-sample losses.
pub trait LossModel {
    type Sample;

    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Scalar loss of one sample against the bound parameters `p`.
    fn sample_loss(&self, tape: &mut Tape, p: &ParamVars, sample: &Self::Sample) -> Result<Var>;
}

/// One labeled sequence ready for a classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[L, input_dim]`.
    pub input: Tensor,
    pub label: CfaLabel,
    /// Index of the originating session in its corpus.
    pub session: usize,
}

impl Sample {
    pub fn target(&self) -> Tensor {
        Tensor::vector(self.label.one_hot().to_vec())
    }
}

#[derive(Clone, Debug)]
pub enum Trunk {
    Gru(GruCell),
    Cnn(ConvPool),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSource {
    Scratch,
    /// Fingerprint of the pre-trained parameter store.
    Pretrained(String),
}

#[derive(Clone, Debug)]
pub struct CfaPredictor {
    pub store: ParamStore,
    pub trunk: Trunk,
    pub head: LinearHead,
    pub init_source: InitSource,
}

/// Prefix of the recurrent trunk's parameters, shared with pre-training.
pub const GRU_PREFIX: &str = "gru";

impl CfaPredictor {
    pub fn gru(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, GRU_PREFIX, input_dim, hidden_dim, &mut rng)?;
        let head = LinearHead::new(&mut store, "head", hidden_dim, 2, Activation::Softmax, &mut rng)?;
        Ok(Self {
            store,
            trunk: Trunk::Gru(cell),
            head,
            init_source: InitSource::Scratch,
        })
    }

    pub fn cnn(input_dim: usize, channels: usize, width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let conv = ConvPool::new(&mut store, "cnn", input_dim, channels, width, &mut rng)?;
        let head = LinearHead::new(&mut store, "head", channels, 2, Activation::Softmax, &mut rng)?;
        Ok(Self {
            store,
            trunk: Trunk::Cnn(conv),
            head,
            init_source: InitSource::Scratch,
        })
    }

    pub fn input_dim(&self) -> usize {
        match &self.trunk {
            Trunk::Gru(c) => c.input_dim,
            Trunk::Cnn(c) => c.in_channels,
        }
    }

    /// Copies the `gru.*` tensors of a pre-trained store; the head is untouched.
    pub fn load_pretrained(&mut self, pretrained: &ParamStore) -> Result<()> {
        if !matches!(self.trunk, Trunk::Gru(_)) {
            return Err(Error::Config("only the recurrent trunk can be pre-trained".into()));
        }
        let prefix = format!("{GRU_PREFIX}.");
        let copied = self.store.load_prefixed(pretrained, &prefix)?;
        if copied != 3 {
            return Err(Error::Config(format!(
                "pre-trained store holds {copied} recurrent tensors, expected 3"
            )));
        }
        self.init_source = InitSource::Pretrained(pretrained.fingerprint());
        Ok(())
    }

    /// Class probabilities `(P(CFA), P(non-CFA))` as a tape node.
    pub fn forward(&self, tape: &mut Tape, p: &ParamVars, input: &Tensor) -> Result<Var> {
        if input.rows() == 0 || input.shape().len() != 2 {
            return Err(Error::Empty("input sequence"));
        }
        let x = tape.constant(input.clone());
        let features = match &self.trunk {
            Trunk::Gru(cell) => cell.encode(tape, p, x)?,
            Trunk::Cnn(conv) => conv.forward(tape, p, x)?,
        };
        Ok(self.head.forward(tape, p, features)?)
    }

    pub fn probabilities(&self, input: &Tensor) -> Result<[f64; 2]> {
        let mut tape = Tape::new();
        let p = bind_constant(&self.store, &mut tape);
        let out = self.forward(&mut tape, &p, input)?;
        let v = tape.value(out).data();
        Ok([v[0], v[1]])
    }

    pub fn classify(&self, input: &Tensor) -> Result<Prediction> {
        Ok(Prediction::from_probabilities(self.probabilities(input)?))
    }
}

/// Binds every parameter as a constant, for inference.
fn bind_constant(store: &ParamStore, tape: &mut Tape) -> ParamVars {
    ParamVars::from_vars(store.iter().map(|p| tape.constant(p.value.clone())).collect())
}

impl LossModel for CfaPredictor {
    type Sample = Sample;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn sample_loss(&self, tape: &mut Tape, p: &ParamVars, sample: &Sample) -> Result<Var> {
        let probs = self.forward(tape, p, &sample.input)?;
        Ok(tape.bce(probs, &sample.target())?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; 2],
    pub cfa: bool,
}

impl Prediction {
    /// Argmax; an exact tie goes to non-CFA.
    pub fn from_probabilities(probabilities: [f64; 2]) -> Self {
        Self {
            probabilities,
            cfa: probabilities[0] > probabilities[1],
        }
    }
}

/// Classifies an encoded session with a recurrent or convolutional model.
pub fn predict(model: &CfaPredictor, enc: &TimeVaryingEncoding) -> Result<Prediction> {
    if enc.is_empty() {
        return Err(Error::Empty("time-varying encoding"));
    }
    model.classify(&enc.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clickstream::ROW_DIM;

    fn zero(model: &mut CfaPredictor) {
        let names: Vec<(String, Vec<usize>)> = model
            .store
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect();
        for (n, s) in names {
            model.store.set(&n, Tensor::zeros(&s)).unwrap();
        }
    }

    #[test]
    fn zero_model_ties_to_non_cfa() {
        let mut m = CfaPredictor::gru(ROW_DIM, 4, 1).unwrap();
        zero(&mut m);
        let enc = TimeVaryingEncoding {
            rows: vec![[0.25, 0.5, 0.0, 1.0, 0.25]; 3],
        };
        let p = predict(&m, &enc).unwrap();
        assert_eq!(p.probabilities, [0.5, 0.5]);
        assert!(!p.cfa);
        assert!(predict(&m, &TimeVaryingEncoding { rows: vec![] }).is_err());
    }

    #[test]
    fn pretrained_load_touches_only_the_trunk() {
        let fresh = CfaPredictor::gru(ROW_DIM, 3, 9).unwrap();
        let mut m = fresh.clone();
        let mut other = CfaPredictor::gru(ROW_DIM, 3, 10).unwrap();
        other.store.insert("pre_head.w", Tensor::zeros(&[3, 5]), true).unwrap();
        m.load_pretrained(&other.store).unwrap();
        for name in ["gru.w", "gru.u", "gru.b"] {
            assert_eq!(m.store.get(name), other.store.get(name));
        }
        for name in ["head.w", "head.b"] {
            assert_eq!(m.store.get(name), fresh.store.get(name));
        }
        assert!(matches!(m.init_source, InitSource::Pretrained(_)));
    }
}
