//! Self-supervised warm-up of the recurrent trunk: predict each click's
//! feature row from all the other clicks of its session.

use clickcfa_neural::{Activation, GruCell, LinearHead, ParamStore, ParamVars, Tape, Tensor, Var};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clickstream::{TimeVaryingEncoding, ROW_DIM};
use crate::error::Result;
use crate::model::{LossModel, GRU_PREFIX};
use crate::train::{diverged, epoch_batches, per_sample_grads};

/// One held-out click with the rest of its session as context.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaveOneOutSample {
    /// `[L - 1, 5]`, or `[L, 5]` with a zero row at the gap.
    pub context: Tensor,
    pub target: Tensor,
    /// `(sequence index, held-out position)`.
    pub origin: (usize, usize),
    /// `mean(L) / L` of the sequence, so that every session carries the
    /// same total weight.
    pub weight: f64,
}

/// All leave-one-out samples of a set of sequences, materialized on demand.
#[derive(Clone, Debug, Default)]
pub struct PretrainSet {
    sequences: Vec<Vec<[f64; ROW_DIM]>>,
    origins: Vec<(usize, usize)>,
    mean_len: f64,
    pub skipped_sessions: usize,
    pub gap_marker: bool,
}

impl PretrainSet {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn origins(&self) -> &[(usize, usize)] {
        &self.origins
    }

    pub fn sample(&self, j: usize) -> LeaveOneOutSample {
        let (s, i) = self.origins[j];
        let rows = &self.sequences[s];
        let mut context: Vec<[f64; ROW_DIM]> = Vec::with_capacity(rows.len());
        context.extend_from_slice(&rows[..i]);
        if self.gap_marker {
            context.push([0.0; ROW_DIM]);
        }
        context.extend_from_slice(&rows[i + 1..]);
        LeaveOneOutSample {
            context: Tensor::from_rows(&context, ROW_DIM).expect("fixed-width rows"),
            target: Tensor::vector(rows[i].to_vec()),
            origin: (s, i),
            weight: self.mean_len / rows.len() as f64,
        }
    }
}

/// Expands full-session encodings into Σ L leave-one-out samples.
/// Sessions with a single click have no context and are skipped.
pub fn expand_corpus(sequences: &[TimeVaryingEncoding], gap_marker: bool) -> PretrainSet {
    let mut set = PretrainSet {
        gap_marker,
        ..PretrainSet::default()
    };
    for (s, enc) in sequences.iter().enumerate() {
        if enc.len() < 2 {
            set.skipped_sessions += 1;
        }
        set.sequences.push(enc.rows.clone());
        if enc.len() >= 2 {
            set.origins.extend((0..enc.len()).map(|i| (s, i)));
        }
    }
    let kept: Vec<usize> = set.sequences.iter().map(Vec::len).filter(|&l| l >= 2).collect();
    set.mean_len = if kept.is_empty() {
        0.0
    } else {
        kept.iter().sum::<usize>() as f64 / kept.len() as f64
    };
    set
}

/// GRU encoder with a ReLU regression head over the five row features.
#[derive(Clone, Debug)]
pub struct PretrainNet {
    pub store: ParamStore,
    pub gru: GruCell,
    pub head: LinearHead,
}

/// Initial bias of the regression head: the middle of the [0, 1] target
/// range, keeping every ReLU output active at the start.
pub const HEAD_BIAS_INIT: f64 = 0.5;

impl PretrainNet {
    pub fn new(hidden_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gru = GruCell::new(&mut store, GRU_PREFIX, ROW_DIM, hidden_dim, &mut rng)?;
        let head = LinearHead::new(&mut store, "pre_head", hidden_dim, ROW_DIM, Activation::Relu, &mut rng)?;
        store.set("pre_head.b", Tensor::full(&[ROW_DIM], HEAD_BIAS_INIT))?;
        Ok(Self { store, gru, head })
    }

    pub fn predict(&self, tape: &mut Tape, p: &ParamVars, context: &Tensor) -> Result<Var> {
        let x = tape.constant(context.clone());
        let h = self.gru.encode(tape, p, x)?;
        Ok(self.head.forward(tape, p, h)?)
    }

    /// Only the recurrent tensors, which is what transfers to the classifier.
    pub fn gru_store(&self) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for p in self
            .store
            .iter()
            .filter(|p| p.name.starts_with(&format!("{GRU_PREFIX}.")))
        {
            out.insert(p.name.clone(), p.value.clone(), true)?;
        }
        Ok(out)
    }
}

impl LossModel for PretrainNet {
    type Sample = LeaveOneOutSample;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn sample_loss(&self, tape: &mut Tape, p: &ParamVars, s: &LeaveOneOutSample) -> Result<Var> {
        let pred = self.predict(tape, p, &s.context)?;
        let mse = tape.mse(pred, &s.target)?;
        Ok(tape.scale(mse, s.weight))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub hidden_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the best loss has not improved by `min_delta` for this many epochs.
    pub patience: usize,
    pub min_delta: f64,
    /// Samples drawn per epoch; 0 uses all of them.
    pub max_samples: usize,
    pub seed: u64,
}

/// Window of the smoothed loss used to detect a rising trend.
pub const SMOOTHING_WINDOW: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    NoImprovement,
    /// The smoothed loss went up.
    Rising,
    NoSamples,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub net: PretrainNet,
    /// `(epoch, mean weighted loss)`.
    pub history: Vec<(usize, f64)>,
    pub stop: StopReason,
}

impl PretrainOutcome {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,l_pre\n");
        for (e, l) in &self.history {
            s.push_str(&format!("{e},{l}\n"));
        }
        s
    }
}

fn smoothed(history: &[(usize, f64)], end: usize) -> f64 {
    let w = &history[end - SMOOTHING_WINDOW..end];
    w.iter().map(|(_, l)| l).sum::<f64>() / SMOOTHING_WINDOW as f64
}

/// SGD on the leave-one-out objective. Stops early when progress stalls
/// and halts with a warning if the loss smoothed over
/// [`SMOOTHING_WINDOW`] epochs increases.
pub fn pretrain(set: &PretrainSet, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let mut net = PretrainNet::new(cfg.hidden_dim, cfg.seed)?;
    let mut outcome_stop = StopReason::MaxEpochs;
    let mut history: Vec<(usize, f64)> = Vec::new();
    if set.is_empty() {
        log::warn!("no pre-training samples, returning the initial weights");
        return Ok(PretrainOutcome {
            net,
            history,
            stop: StopReason::NoSamples,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_ba7c);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    for epoch in 0..cfg.max_epochs {
        let chosen: Vec<usize> = if cfg.max_samples == 0 || cfg.max_samples >= set.len() {
            (0..set.len()).collect()
        } else {
            let mut v = sample_indices(&mut rng, set.len(), cfg.max_samples).into_vec();
            v.sort_unstable();
            v
        };
        let mut total = 0.0;
        for batch in epoch_batches(chosen.len(), cfg.batch_size, &mut rng) {
            let samples: Vec<LeaveOneOutSample> = batch.iter().map(|&b| set.sample(chosen[b])).collect();
            let refs: Vec<&LeaveOneOutSample> = samples.iter().collect();
            let (losses, grads): (Vec<f64>, Vec<_>) = per_sample_grads(&net, &refs)?.into_iter().unzip();
            if let Some(l) = losses.iter().find(|l| !l.is_finite()) {
                return Err(diverged("pre-training epoch", epoch, format!("loss {l}")));
            }
            total += losses.iter().sum::<f64>();
            let mean = clickcfa_neural::GradSet::weighted_mean(&grads, &vec![1.0; grads.len()]);
            clickcfa_neural::sgd_commit(&mut net.store, &mean, cfg.lr)
                .map_err(|e| diverged("pre-training epoch", epoch, e.to_string()))?;
        }
        let loss = total / chosen.len() as f64;
        history.push((epoch, loss));
        log::debug!("pre-training epoch {epoch}: {loss}");

        if history.len() > SMOOTHING_WINDOW && smoothed(&history, history.len()) > smoothed(&history, history.len() - 1)
        {
            log::warn!("pre-training halted at epoch {epoch}: smoothed loss is rising");
            outcome_stop = StopReason::Rising;
            break;
        }
        if loss < best - cfg.min_delta {
            best = loss;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                outcome_stop = StopReason::NoImprovement;
                break;
            }
        }
    }
    Ok(PretrainOutcome {
        net,
        history,
        stop: outcome_stop,
    })
}

impl PretrainConfig {
    pub fn from_recipe(r: &crate::recipe::TrainRecipe, seed: u64) -> Self {
        Self {
            hidden_dim: r.hidden_dim,
            lr: r.pretrain_lr,
            batch_size: r.pretrain_batch_size,
            max_epochs: r.pretrain_epochs,
            patience: r.pretrain_patience,
            min_delta: r.pretrain_min_delta,
            max_samples: r.pretrain_max_samples,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(len: usize) -> TimeVaryingEncoding {
        TimeVaryingEncoding {
            rows: (0..len).map(|i| [i as f64, 0.0, 0.0, 1.0, 0.25]).collect(),
        }
    }

    #[test]
    fn expansion_counts() {
        let set = expand_corpus(&[enc(4), enc(3)], false);
        assert_eq!(set.len(), 7);
        let set = expand_corpus(&[enc(4), enc(1)], false);
        assert_eq!((set.len(), set.skipped_sessions), (4, 1));
        let s = set.sample(1);
        assert_eq!(s.context.rows(), 3);
        assert_eq!(s.context.row(0)[0], 0.0);
        assert_eq!(s.context.row(1)[0], 2.0);
        assert_eq!(s.target.data()[0], 1.0);
        let gap = expand_corpus(&[enc(4)], true).sample(1);
        assert_eq!(gap.context.rows(), 4);
        assert_eq!(gap.context.row(1), &[0.0; 5]);
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let cfg = PretrainConfig {
            hidden_dim: 3,
            lr: 0.1,
            batch_size: 2,
            max_epochs: 0,
            patience: 10,
            min_delta: 1e-5,
            max_samples: 0,
            seed: 4,
        };
        let out = pretrain(&expand_corpus(&[enc(3)], false), &cfg).unwrap();
        assert_eq!(
            out.net.store.fingerprint(),
            PretrainNet::new(3, 4).unwrap().store.fingerprint()
        );
        assert!(out.history.is_empty());
    }
}
