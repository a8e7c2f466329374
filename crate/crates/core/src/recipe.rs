//! Training configuration shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::clickstream::{Criterion, EncodingConfig};
use crate::error::{Error, Result};
use crate::kv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gru,
    Cnn,
    Ngram3,
    Ngram4,
}

impl ModelKind {
    pub fn ngram_order(self) -> Option<usize> {
        match self {
            ModelKind::Ngram3 => Some(3),
            ModelKind::Ngram4 => Some(4),
            _ => None,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(ModelKind::Gru),
            "cnn" => Ok(ModelKind::Cnn),
            "ngram3" => Ok(ModelKind::Ngram3),
            "ngram4" => Ok(ModelKind::Ngram4),
            _ => Err(Error::Config(format!("unknown model `{s}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gru => "gru",
            ModelKind::Cnn => "cnn",
            ModelKind::Ngram3 => "ngram3",
            ModelKind::Ngram4 => "ngram4",
        })
    }
}

/// Every knob of a training run. [`Default`] gives the reference
/// settings: hidden size 128, batch 32, learning rates 0.001, 100 epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecipe {
    pub model: ModelKind,
    pub pretrain: bool,
    pub meta: bool,
    /// Static features used to cluster the meta set; required with `meta`.
    pub criterion: Option<Criterion>,
    pub hidden_dim: usize,
    pub batch_size: usize,
    /// Classifier step size α.
    pub lr: f64,
    /// Weighting-net step size β.
    pub meta_lr: f64,
    pub epochs: usize,
    pub meta_fraction: f64,
    pub meta_batch_size: usize,
    /// Share of the meta set actually used (meta-usage ablation).
    pub meta_usage: f64,
    pub weight_hidden: usize,
    /// Feed the weighting net losses standardized within each batch.
    pub standardize_loss: bool,
    /// One Θ update per batch; otherwise once per epoch, on its first batch.
    pub theta_per_batch: bool,
    /// Hash the committed parameters around every lookahead.
    pub verify_lookahead: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub n_folds: usize,
    pub stratify: bool,
    pub seed: u64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch_size: usize,
    pub pretrain_patience: usize,
    pub pretrain_min_delta: f64,
    /// Leave-one-out samples drawn per pre-training epoch; 0 uses all.
    pub pretrain_max_samples: usize,
    /// Insert a zero row where the held-out click was removed.
    pub gap_marker: bool,
    pub cnn_channels: usize,
    pub cnn_width: usize,
    /// Treat CFA as the positive class for F1.
    pub positive_cfa: bool,
    pub encoding: EncodingConfig,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        Self {
            model: ModelKind::Gru,
            pretrain: false,
            meta: false,
            criterion: None,
            hidden_dim: 128,
            batch_size: 32,
            lr: 0.001,
            meta_lr: 0.001,
            epochs: 100,
            meta_fraction: 0.1,
            meta_batch_size: 32,
            meta_usage: 1.0,
            weight_hidden: 100,
            standardize_loss: false,
            theta_per_batch: true,
            verify_lookahead: false,
            k_min: 2,
            k_max: 19,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
            n_folds: 5,
            stratify: false,
            seed: 0,
            pretrain_epochs: 100,
            pretrain_lr: 0.001,
            pretrain_batch_size: 32,
            pretrain_patience: 10,
            pretrain_min_delta: 1e-5,
            pretrain_max_samples: 0,
            gap_marker: false,
            cnn_channels: 64,
            cnn_width: 3,
            positive_cfa: true,
            encoding: EncodingConfig::default(),
        }
    }
}

/// Recipe names accepted by [`TrainRecipe::preset`], in table order.
pub const PRESETS: [&str; 9] = [
    "3-gram",
    "4-gram",
    "cnn",
    "gru",
    "pre-gru",
    "gru-meta-c1",
    "gru-meta-c2",
    "pre-gru-meta-c1",
    "pre-gru-meta-c2",
];

impl TrainRecipe {
    /// Applies a named method configuration on top of `base`.
    pub fn preset(name: &str, base: &TrainRecipe) -> Result<Self> {
        let mut r = base.clone();
        r.pretrain = false;
        r.meta = false;
        r.criterion = None;
        r.model = ModelKind::Gru;
        match name {
            "3-gram" => r.model = ModelKind::Ngram3,
            "4-gram" => r.model = ModelKind::Ngram4,
            "cnn" => r.model = ModelKind::Cnn,
            "gru" => {}
            "pre-gru" => r.pretrain = true,
            _ => {
                let (pre, rest) = match name.strip_prefix("pre-") {
                    Some(rest) => (true, rest),
                    None => (false, name),
                };
                let crit = rest
                    .strip_prefix("gru-meta-")
                    .ok_or_else(|| Error::Config(format!("unknown recipe `{name}`")))?;
                r.pretrain = pre;
                r.meta = true;
                r.criterion = Some(crit.parse()?);
            }
        }
        Ok(r)
    }

    /// Display label of the configured method.
    pub fn label(&self) -> String {
        match self.model {
            ModelKind::Ngram3 => "3-gram".into(),
            ModelKind::Ngram4 => "4-gram".into(),
            ModelKind::Cnn => "CNN".into(),
            ModelKind::Gru => {
                let mut s = if self.pretrain {
                    "pre-GRU".to_string()
                } else {
                    "GRU".to_string()
                };
                if self.meta {
                    let c = self.criterion.map(|c| c.to_string()).unwrap_or_default();
                    s.push_str(&format!("-meta({c})"));
                }
                s
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.meta && self.criterion.is_none() {
            return fail("meta-learning requires a clustering criterion");
        }
        if self.meta && self.model != ModelKind::Gru {
            return fail("meta-learning is only defined for the GRU model");
        }
        if self.pretrain && self.model != ModelKind::Gru {
            return fail("pre-training is only defined for the GRU model");
        }
        if self.hidden_dim == 0 || self.batch_size == 0 || self.meta_batch_size == 0 || self.weight_hidden == 0 {
            return fail("sizes must be positive");
        }
        if self.pretrain_batch_size == 0 || self.cnn_channels == 0 || self.cnn_width == 0 {
            return fail("sizes must be positive");
        }
        for (name, v) in [
            ("lr", self.lr),
            ("meta_lr", self.meta_lr),
            ("pretrain_lr", self.pretrain_lr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !(self.meta_fraction > 0.0 && self.meta_fraction < 0.5) {
            return fail("meta_fraction must lie in (0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.meta_usage) {
            return fail("meta_usage must lie in [0, 1]");
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return fail("cluster range must satisfy 2 <= k_min <= k_max");
        }
        if self.n_folds < 2 {
            return fail("n_folds must be at least 2");
        }
        if self.kmeans_restarts == 0 || self.kmeans_max_iter == 0 {
            return fail("k-means needs at least one restart and iteration");
        }
        let e = &self.encoding;
        if !(e.eps_skip >= 0.0 && e.coalesce_window >= 0.0 && e.dt_cap > 0.0 && e.r_max > 0.0) {
            return fail("invalid encoding constants");
        }
        Ok(())
    }

    /// Canonical `key = value` lines, one per field.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("model", self.model.to_string()),
            ("pretrain", self.pretrain.to_string()),
            ("meta", self.meta.to_string()),
            (
                "criterion",
                self.criterion.map_or("none".to_string(), |c| c.to_string()),
            ),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("meta_lr", self.meta_lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("meta_fraction", self.meta_fraction.to_string()),
            ("meta_batch_size", self.meta_batch_size.to_string()),
            ("meta_usage", self.meta_usage.to_string()),
            ("weight_hidden", self.weight_hidden.to_string()),
            ("standardize_loss", self.standardize_loss.to_string()),
            ("theta_per_batch", self.theta_per_batch.to_string()),
            ("verify_lookahead", self.verify_lookahead.to_string()),
            ("k_min", self.k_min.to_string()),
            ("k_max", self.k_max.to_string()),
            ("kmeans_restarts", self.kmeans_restarts.to_string()),
            ("kmeans_max_iter", self.kmeans_max_iter.to_string()),
            ("n_folds", self.n_folds.to_string()),
            ("stratify", self.stratify.to_string()),
            ("seed", self.seed.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("pretrain_lr", self.pretrain_lr.to_string()),
            ("pretrain_batch_size", self.pretrain_batch_size.to_string()),
            ("pretrain_patience", self.pretrain_patience.to_string()),
            ("pretrain_min_delta", self.pretrain_min_delta.to_string()),
            ("pretrain_max_samples", self.pretrain_max_samples.to_string()),
            ("gap_marker", self.gap_marker.to_string()),
            ("cnn_channels", self.cnn_channels.to_string()),
            ("cnn_width", self.cnn_width.to_string()),
            ("positive_cfa", self.positive_cfa.to_string()),
            ("eps_skip", self.encoding.eps_skip.to_string()),
            ("coalesce_window", self.encoding.coalesce_window.to_string()),
            ("dt_cap", self.encoding.dt_cap.to_string()),
            ("r_max", self.encoding.r_max.to_string()),
        ]
    }

    /// Sets one field from its textual form. Returns `false` for keys
    /// that are not recipe fields.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
        }
        let b = |v: &str| kv::parse_bool(key, v);
        match key {
            "model" => self.model = value.parse()?,
            "pretrain" => self.pretrain = b(value)?,
            "meta" => self.meta = b(value)?,
            "criterion" => {
                self.criterion = match value {
                    "none" | "" => None,
                    v => Some(v.parse()?),
                }
            }
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "meta_lr" => self.meta_lr = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "meta_fraction" => self.meta_fraction = num(key, value)?,
            "meta_batch_size" => self.meta_batch_size = num(key, value)?,
            "meta_usage" => self.meta_usage = num(key, value)?,
            "weight_hidden" => self.weight_hidden = num(key, value)?,
            "standardize_loss" => self.standardize_loss = b(value)?,
            "theta_per_batch" => self.theta_per_batch = b(value)?,
            "verify_lookahead" => self.verify_lookahead = b(value)?,
            "k_min" => self.k_min = num(key, value)?,
            "k_max" => self.k_max = num(key, value)?,
            "kmeans_restarts" => self.kmeans_restarts = num(key, value)?,
            "kmeans_max_iter" => self.kmeans_max_iter = num(key, value)?,
            "n_folds" => self.n_folds = num(key, value)?,
            "stratify" => self.stratify = b(value)?,
            "seed" => self.seed = num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value)?,
            "pretrain_lr" => self.pretrain_lr = num(key, value)?,
            "pretrain_batch_size" => self.pretrain_batch_size = num(key, value)?,
            "pretrain_patience" => self.pretrain_patience = num(key, value)?,
            "pretrain_min_delta" => self.pretrain_min_delta = num(key, value)?,
            "pretrain_max_samples" => self.pretrain_max_samples = num(key, value)?,
            "gap_marker" => self.gap_marker = b(value)?,
            "cnn_channels" => self.cnn_channels = num(key, value)?,
            "cnn_width" => self.cnn_width = num(key, value)?,
            "positive_cfa" => self.positive_cfa = b(value)?,
            "eps_skip" => self.encoding.eps_skip = num(key, value)?,
            "coalesce_window" => self.encoding.coalesce_window = num(key, value)?,
            "dt_cap" => self.encoding.dt_cap = num(key, value)?,
            "r_max" => self.encoding.r_max = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses a full recipe file; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut r = TrainRecipe::default();
        for e in kv::parse(text)? {
            if !r.set(&e.key, &e.value)? {
                return Err(Error::Config(format!(
                    "line {}: unknown recipe key `{}`",
                    e.line, e.key
                )));
            }
        }
        Ok(r)
    }

    /// SHA-256 of the canonical form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_kv().as_bytes()))
    }

    /// Fingerprint of just the fields that affect pre-training.
    pub fn pretrain_fingerprint(&self) -> String {
        const KEYS: [&str; 14] = [
            "hidden_dim",
            "seed",
            "pretrain_epochs",
            "pretrain_lr",
            "pretrain_batch_size",
            "pretrain_patience",
            "pretrain_min_delta",
            "pretrain_max_samples",
            "gap_marker",
            "eps_skip",
            "coalesce_window",
            "dt_cap",
            "r_max",
            "n_folds",
        ];
        let text: String = self
            .to_pairs()
            .into_iter()
            .filter(|(k, _)| KEYS.contains(k))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Independent seed for a named stream, e.g. `("init", fold)`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
