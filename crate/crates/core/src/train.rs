//! Mini-batch SGD over per-sample losses.
//!
//! Every sample gets its own tape, so variable-length sequences need no
//! padding and per-sample gradients (needed by the reweighting loop)
//! come for free. A batch gradient is the mean of the sample gradients.

use clickcfa_neural::{sgd_commit, GradSet, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{CfaPredictor, LossModel, Sample};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds the batch-order stream.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, measured before each update.
    pub train_loss: f64,
    pub val_acc: Option<f64>,
}

/// Loss value and parameter gradient of each sample.
pub fn per_sample_grads<M: LossModel>(model: &M, samples: &[&M::Sample]) -> Result<Vec<(f64, GradSet)>> {
    samples
        .iter()
        .map(|s| {
            let mut tape = Tape::new();
            let p = model.store().bind(&mut tape);
            let loss = model.sample_loss(&mut tape, &p, s)?;
            let value = tape.value(loss).item();
            let grads = tape.backward(loss)?;
            Ok((value, p.collect(&grads)))
        })
        .collect()
}

/// Shuffled index batches for one epoch; the last batch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub(crate) fn diverged(stage: &'static str, index: usize, detail: impl Into<String>) -> Error {
    Error::Diverged {
        stage,
        index,
        detail: detail.into(),
    }
}

/// Unweighted mini-batch SGD. `hook` runs after every epoch and may
/// return a validation accuracy to record.
pub fn train_plain<M, F>(model: &mut M, train: &[M::Sample], cfg: &SgdConfig, mut hook: F) -> Result<Vec<EpochRecord>>
where
    M: LossModel,
    F: FnMut(usize, &M) -> Result<Option<f64>>,
{
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(train.len(), cfg.batch_size, &mut rng) {
            let samples: Vec<&M::Sample> = batch.iter().map(|&i| &train[i]).collect();
            let per = per_sample_grads(model, &samples)?;
            let (losses, grads): (Vec<f64>, Vec<GradSet>) = per.into_iter().unzip();
            if let Some(l) = losses.iter().find(|l| !l.is_finite()) {
                return Err(diverged("epoch", epoch, format!("training loss {l}")));
            }
            total += losses.iter().sum::<f64>();
            let mean = GradSet::weighted_mean(&grads, &vec![1.0; grads.len()]);
            sgd_commit(model.store_mut(), &mean, cfg.lr).map_err(|e| diverged("epoch", epoch, e.to_string()))?;
        }
        history.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_acc: hook(epoch, model)?,
        });
    }
    Ok(history)
}

/// Fraction of samples whose hard prediction matches the label.
pub fn accuracy(model: &CfaPredictor, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut hits = 0usize;
    for s in samples {
        if model.classify(&s.input)?.cfa == s.label.cfa {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// [`train_plain`] for the classifier, recording accuracy on `val` if given.
pub fn fit(
    model: &mut CfaPredictor,
    train: &[Sample],
    val: Option<&[Sample]>,
    cfg: &SgdConfig,
) -> Result<Vec<EpochRecord>> {
    train_plain(model, train, cfg, |_, m| val.map(|v| accuracy(m, v)).transpose())
}
