//! Loss-based sample reweighting learned on a clustered meta set.
//!
//! Each training batch runs three steps:
//!
//! 1. a virtual SGD step `ŵ(Θ) = w − α/B · Σ W(L_n; Θ) ∇L_n` recorded on a
//!    tape with the weighting-net parameters `Θ` as leaves;
//! 2. one SGD step on `Θ` against the mean meta loss at `ŵ(Θ)`, whose
//!    gradient flows back through the virtual step (second order);
//! 3. the real weighted step on `w` using weights from the updated `Θ`.
//!
//! Meta batches come from one cluster at a time, in entropy order.

use clickcfa_neural::{sgd_commit, Activation, GradSet, LinearHead, ParamStore, ParamVars, Tape, Tensor, Var};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::MetaClusterSet;
use crate::error::{Error, Result};
use crate::model::LossModel;
use crate::train::{diverged, epoch_batches, per_sample_grads, EpochRecord};

/// `loss -> sigmoid(hidden) -> sigmoid(out)`, a weight in (0, 1).
#[derive(Clone, Debug)]
pub struct WeightingNet {
    pub store: ParamStore,
    pub hidden: LinearHead,
    pub out: LinearHead,
}

impl WeightingNet {
    pub fn new(hidden_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let hidden = LinearHead::new(&mut store, "wnet.hidden", 1, hidden_dim, Activation::Sigmoid, &mut rng)?;
        let out = LinearHead::new(&mut store, "wnet.out", hidden_dim, 1, Activation::Sigmoid, &mut rng)?;
        Ok(Self { store, hidden, out })
    }

    /// All parameters zero, so every weight is exactly 0.5.
    pub fn zeros(hidden_dim: usize) -> Result<Self> {
        let mut net = Self::new(hidden_dim, 0)?;
        let shapes: Vec<(String, Vec<usize>)> = net
            .store
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec()))
            .collect();
        for (name, shape) in shapes {
            net.store.set(&name, Tensor::zeros(&shape))?;
        }
        Ok(net)
    }

    pub fn forward(&self, tape: &mut Tape, theta: &ParamVars, input: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, theta, input)?;
        Ok(self.out.forward(tape, theta, h)?)
    }

    /// Weight for one loss value.
    pub fn weigh(&self, loss: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let theta = ParamVars::from_vars(self.store.iter().map(|p| tape.constant(p.value.clone())).collect());
        let x = tape.constant(Tensor::vector(vec![loss]));
        let w = self.forward(&mut tape, &theta, x)?;
        Ok(tape.value(w).item())
    }
}

/// Weighting-net inputs for a batch of losses: raw, or z-scored within
/// the batch.
pub fn net_inputs(losses: &[f64], standardize: bool) -> Vec<f64> {
    if !standardize {
        return losses.to_vec();
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let sd = (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
    losses
        .iter()
        .map(|l| if sd > 0.0 { (l - mean) / sd } else { 0.0 })
        .collect()
}

/// Records `ŵ(Θ)` on `tape`. `per` holds each sample's loss input and
/// gradient at the committed `w`; both are constants. Returns the
/// lookahead parameters (in store order) and the per-sample weight nodes.
pub fn lookahead_update(
    tape: &mut Tape,
    store: &ParamStore,
    inputs: &[f64],
    grads: &[GradSet],
    net: &WeightingNet,
    theta: &ParamVars,
    alpha: f64,
) -> Result<(ParamVars, Vec<Var>)> {
    if grads.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let weights: Vec<Var> = inputs
        .iter()
        .map(|&x| {
            let x = tape.constant(Tensor::vector(vec![x]));
            net.forward(tape, theta, x)
        })
        .collect::<Result<_>>()?;
    let step = alpha / grads.len() as f64;
    let mut vars = Vec::with_capacity(store.len());
    for (j, p) in store.iter().enumerate() {
        let w = tape.constant(p.value.clone());
        if !p.trainable {
            vars.push(w);
            continue;
        }
        let terms: Vec<Var> = grads
            .iter()
            .zip(&weights)
            .map(|(g, &wn)| {
                let g = tape.constant(g.0[j].clone());
                tape.scale_by(g, wn)
            })
            .collect::<std::result::Result<_, _>>()?;
        let sum = tape.add_n(&terms)?;
        let delta = tape.scale(sum, step);
        vars.push(tape.sub(w, delta)?);
    }
    Ok((ParamVars::from_vars(vars), weights))
}

/// Mean meta loss at `ŵ(Θ)` and its exact gradient with respect to `Θ`.
pub fn meta_gradient<M: LossModel>(
    model: &M,
    inputs: &[f64],
    grads: &[GradSet],
    meta_batch: &[&M::Sample],
    net: &WeightingNet,
    alpha: f64,
) -> Result<(f64, GradSet)> {
    if meta_batch.is_empty() {
        return Err(Error::Empty("meta batch"));
    }
    let mut tape = Tape::new();
    let theta = net.store.bind(&mut tape);
    let (w_hat, _) = lookahead_update(&mut tape, model.store(), inputs, grads, net, &theta, alpha)?;
    let losses: Vec<Var> = meta_batch
        .iter()
        .map(|s| model.sample_loss(&mut tape, &w_hat, s))
        .collect::<Result<_>>()?;
    let total = tape.add_n(&losses)?;
    let mean = tape.scale(total, 1.0 / meta_batch.len() as f64);
    let value = tape.value(mean).item();
    let g = tape.backward(mean)?;
    Ok((value, theta.collect(&g)))
}

/// One SGD step on `Θ`; returns the meta loss before the step.
pub fn update_theta<M: LossModel>(
    model: &M,
    inputs: &[f64],
    grads: &[GradSet],
    meta_batch: &[&M::Sample],
    net: &mut WeightingNet,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let (loss, g) = meta_gradient(model, inputs, grads, meta_batch, net, alpha)?;
    if !loss.is_finite() || !g.is_finite() {
        return Err(Error::Neural(clickcfa_neural::NeuralError::Diverged(format!(
            "meta loss {loss} or its gradient is not finite"
        ))));
    }
    sgd_commit(&mut net.store, &g, beta)?;
    Ok(loss)
}

/// Committed weighted step `w ← w − α/B · Σ W(L_n; Θ) ∇L_n`; returns the weights.
pub fn update_w<M: LossModel>(
    model: &mut M,
    inputs: &[f64],
    grads: &[GradSet],
    net: &WeightingNet,
    alpha: f64,
) -> Result<Vec<f64>> {
    let weights: Vec<f64> = inputs.iter().map(|&x| net.weigh(x)).collect::<Result<_>>()?;
    let mean = GradSet::weighted_mean(grads, &weights);
    sgd_commit(model.store_mut(), &mean, alpha)?;
    Ok(weights)
}

/// Epoch budget per cluster: `T / N_c` each, with the remainder going to
/// the earliest clusters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaSchedule {
    pub epochs_per_cluster: Vec<usize>,
}

impl MetaSchedule {
    pub fn new(total_epochs: usize, clusters: usize) -> Result<Self> {
        if clusters == 0 {
            return Err(Error::Empty("meta cluster set"));
        }
        let base = total_epochs / clusters;
        let extra = total_epochs % clusters;
        Ok(Self {
            epochs_per_cluster: (0..clusters).map(|p| base + usize::from(p < extra)).collect(),
        })
    }

    pub fn total(&self) -> usize {
        self.epochs_per_cluster.iter().sum()
    }

    /// Cluster position used in each epoch.
    pub fn epoch_clusters(&self) -> Vec<usize> {
        self.epochs_per_cluster
            .iter()
            .enumerate()
            .flat_map(|(p, &n)| std::iter::repeat_n(p, n))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetaConfig {
    /// Classifier step size α.
    pub alpha: f64,
    /// Weighting-net step size β.
    pub beta: f64,
    pub batch_size: usize,
    pub meta_batch_size: usize,
    pub epochs: usize,
    /// Batch-order stream; equal to the plain trainer's for the same run.
    pub seed: u64,
    /// Meta-batch stream.
    pub meta_seed: u64,
    pub standardize_loss: bool,
    pub theta_per_batch: bool,
    pub verify_lookahead: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub cluster: usize,
    pub train_loss: f64,
    /// Meta loss before the Θ step, when one was taken.
    pub meta_loss: Option<f64>,
    pub mean_weight: f64,
    pub std_weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetaHistory {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl MetaHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,cluster,train_loss,meta_loss,mean_weight,std_weight\n");
        for r in &self.iterations {
            let meta = r.meta_loss.map(|m| m.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.cluster, r.train_loss, meta, r.mean_weight, r.std_weight
            ));
        }
        s
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// The clustering-guided reweighting loop.
///
/// `meta` holds the meta samples indexed by `clusters`. Epochs are
/// spent on clusters in the order of `clusters` per [`MetaSchedule`];
/// `Θ` carries over from one cluster to the next. `on_epoch` runs after
/// every epoch and may return a validation accuracy to record.
pub fn train_clustered_meta<M, F>(
    model: &mut M,
    train: &[M::Sample],
    meta: &[M::Sample],
    clusters: &MetaClusterSet,
    net: &mut WeightingNet,
    cfg: &MetaConfig,
    mut on_epoch: F,
) -> Result<MetaHistory>
where
    M: LossModel,
    F: FnMut(usize, &M) -> Result<Option<f64>>,
{
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if clusters
        .clusters
        .iter()
        .any(|c| c.is_empty() || c.iter().any(|&i| i >= meta.len()))
    {
        return Err(Error::Clustering(
            "meta clusters must be non-empty and index the meta set".into(),
        ));
    }
    let schedule = MetaSchedule::new(cfg.epochs, clusters.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut meta_rng = ChaCha8Rng::seed_from_u64(cfg.meta_seed);
    let mut history = MetaHistory::default();
    let mut iteration = 0usize;
    for (epoch, p) in schedule.epoch_clusters().into_iter().enumerate() {
        let cluster = &clusters.clusters[p];
        let mut total = 0.0;
        for (b, batch) in epoch_batches(train.len(), cfg.batch_size, &mut rng)
            .into_iter()
            .enumerate()
        {
            let fail = |e: Error| diverged("meta iteration", iteration, e.to_string());
            let samples: Vec<&M::Sample> = batch.iter().map(|&i| &train[i]).collect();
            let (losses, grads): (Vec<f64>, Vec<GradSet>) = per_sample_grads(model, &samples)?.into_iter().unzip();
            if let Some(l) = losses.iter().find(|l| !l.is_finite()) {
                return Err(diverged("meta iteration", iteration, format!("training loss {l}")));
            }
            total += losses.iter().sum::<f64>();
            let inputs = net_inputs(&losses, cfg.standardize_loss);

            let meta_loss = if cfg.theta_per_batch || b == 0 {
                let m = cfg.meta_batch_size.min(cluster.len());
                let picks = sample_indices(&mut meta_rng, cluster.len(), m);
                let meta_batch: Vec<&M::Sample> = picks.iter().map(|i| &meta[cluster[i]]).collect();
                let before = cfg.verify_lookahead.then(|| model.store().fingerprint());
                let loss = update_theta(model, &inputs, &grads, &meta_batch, net, cfg.alpha, cfg.beta).map_err(fail)?;
                if let Some(h) = before {
                    if h != model.store().fingerprint() {
                        return Err(fail(Error::Config("lookahead modified committed parameters".into())));
                    }
                }
                Some(loss)
            } else {
                None
            };

            let weights = update_w(model, &inputs, &grads, net, cfg.alpha).map_err(fail)?;
            let (mean_weight, std_weight) = mean_std(&weights);
            history.iterations.push(IterationRecord {
                iteration,
                epoch,
                cluster: p,
                train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
                meta_loss,
                mean_weight,
                std_weight,
            });
            iteration += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_acc: on_epoch(epoch, model)?,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_weighs_one_half() {
        let net = WeightingNet::zeros(100).unwrap();
        for l in [0.0, 0.3, 7.0, 1e6] {
            assert_eq!(net.weigh(l).unwrap(), 0.5);
        }
    }

    #[test]
    fn schedule_splits_epochs() {
        let s = MetaSchedule::new(100, 2).unwrap();
        assert_eq!(s.epochs_per_cluster, vec![50, 50]);
        let s = MetaSchedule::new(7, 3).unwrap();
        assert_eq!(s.epochs_per_cluster, vec![3, 2, 2]);
        assert_eq!(s.epoch_clusters(), vec![0, 0, 0, 1, 1, 2, 2]);
        let s = MetaSchedule::new(5, 1).unwrap();
        assert_eq!(s.epoch_clusters(), vec![0; 5]);
        assert!(MetaSchedule::new(5, 0).is_err());
    }

    #[test]
    fn standardized_inputs() {
        assert_eq!(net_inputs(&[1.0, 3.0], true), vec![-1.0, 1.0]);
        assert_eq!(net_inputs(&[2.0, 2.0], true), vec![0.0, 0.0]);
        assert_eq!(net_inputs(&[2.0, 5.0], false), vec![2.0, 5.0]);
    }
}
