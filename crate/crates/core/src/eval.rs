//! Metrics, cross-validation, the meta-usage sweep and n-gram analytics.

use std::collections::{BTreeMap, HashMap, HashSet};

use clickcfa_neural::ParamStore;

use crate::baselines::{gram_label, ngram_encode, Gram};
use crate::clickstream::{build_full_sequence, build_static, EventType};
use crate::clustering::{cluster_meta, KMeansConfig, KSelection, MetaClusterSet};
use crate::data::{carve_meta, subsample, Corpus};
use crate::dataset::{build_samples, input_dim};
use crate::error::{Error, Result};
use crate::meta::{train_clustered_meta, MetaConfig, MetaHistory, WeightingNet};
use crate::model::{CfaPredictor, Prediction};
use crate::pretrain::{expand_corpus, pretrain, PretrainConfig, StopReason};
use crate::recipe::{derive_seed, ModelKind, TrainRecipe};
use crate::train::{fit, EpochRecord, SgdConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score {
    pub confusion: Confusion,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy and F1. With `positive_cfa` the CFA class is positive,
/// otherwise non-CFA is.
pub fn score(predictions: &[bool], labels: &[bool], positive_cfa: bool) -> Result<Score> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        let (p, l) = if positive_cfa { (p, l) } else { (!p, !l) };
        match (p, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(score_confusion(c))
}

pub fn score_confusion(c: Confusion) -> Score {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Score {
        confusion: c,
        acc: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldScore {
    pub fold: usize,
    pub score: Score,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub fingerprint: String,
    pub folds: Vec<FoldScore>,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn from_folds(label: String, fingerprint: String, folds: Vec<FoldScore>) -> Self {
        let accs: Vec<f64> = folds.iter().map(|f| f.score.acc).collect();
        let f1s: Vec<f64> = folds.iter().map(|f| f.score.f1).collect();
        let (acc_mean, acc_std) = mean_std(&accs);
        let (f1_mean, f1_std) = mean_std(&f1s);
        let mut confusion = Confusion::default();
        for f in &folds {
            confusion.add(&f.score.confusion);
        }
        Self {
            label,
            fingerprint,
            folds,
            acc_mean,
            acc_std,
            f1_mean,
            f1_std,
            confusion,
        }
    }
}

/// Pre-trained recurrent weights keyed by fold and pre-training settings.
#[derive(Clone, Debug, Default)]
pub struct PretrainCache {
    entries: HashMap<(usize, String), PretrainRecord>,
}

#[derive(Clone, Debug)]
pub struct PretrainRecord {
    pub gru: ParamStore,
    pub history_csv: String,
    pub stop: StopReason,
    pub samples: usize,
}

impl PretrainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_train(
        &mut self,
        corpus: &Corpus,
        pool: &[usize],
        fold: usize,
        recipe: &TrainRecipe,
    ) -> Result<&PretrainRecord> {
        let key = (fold, recipe_pretrain_key(recipe, corpus));
        if !self.entries.contains_key(&key) {
            let rec = pretrain_on(corpus, pool, fold, recipe)?;
            self.entries.insert(key.clone(), rec);
        }
        Ok(&self.entries[&key])
    }
}

fn recipe_pretrain_key(recipe: &TrainRecipe, corpus: &Corpus) -> String {
    format!(
        "{}:{}:{}",
        recipe.pretrain_fingerprint(),
        corpus.dataset_name,
        corpus.len()
    )
}

/// Pre-trains on the full event sequences of the sessions in `pool`.
/// Labels are never consulted.
pub fn pretrain_on(corpus: &Corpus, pool: &[usize], fold: usize, recipe: &TrainRecipe) -> Result<PretrainRecord> {
    let sequences: Vec<_> = pool
        .iter()
        .map(|&i| build_full_sequence(&corpus.sessions[i], &recipe.encoding))
        .collect();
    let set = expand_corpus(&sequences, recipe.gap_marker);
    let cfg = PretrainConfig::from_recipe(recipe, derive_seed(recipe.seed, "pretrain", fold as u64));
    let out = pretrain(&set, &cfg)?;
    Ok(PretrainRecord {
        gru: out.net.gru_store()?,
        history_csv: out.history_csv(),
        stop: out.stop,
        samples: set.len(),
    })
}

/// Everything produced while training and testing on one fold.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub score: Score,
    /// `(session index, prediction, true CFA)` for every test sample.
    pub predictions: Vec<(usize, Prediction, bool)>,
    pub model: CfaPredictor,
    pub history: Vec<EpochRecord>,
    pub meta_history: Option<MetaHistory>,
    pub weighting: Option<WeightingNet>,
    pub clusters: Option<MetaClusterSet>,
    /// CFA label of each clustered meta sample, aligned with cluster members.
    pub meta_labels: Vec<bool>,
    pub selection: Option<KSelection>,
    pub train_size: usize,
    pub meta_size: usize,
    pub dropped: usize,
    pub pretrain_history: Option<String>,
}

/// Session index sets of one fold: `(train, meta, test, rest)`.
pub type FoldSplit = (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>);

/// Splits around `fold`: test is every session of the fold, rest every
/// other session, and train and meta partition the labeled rest.
pub fn fold_split(corpus: &Corpus, fold: usize, recipe: &TrainRecipe) -> Result<FoldSplit> {
    let assign = corpus
        .fold_assignments
        .as_ref()
        .ok_or_else(|| Error::Split("corpus has no fold assignment".into()))?;
    let rest: Vec<usize> = (0..corpus.len()).filter(|&i| assign[i] != fold).collect();
    let test: Vec<usize> = (0..corpus.len()).filter(|&i| assign[i] == fold).collect();
    let labeled_rest: Vec<usize> = rest
        .iter()
        .copied()
        .filter(|&i| corpus.sessions[i].is_labeled())
        .collect();
    let (train, meta) = carve_meta(
        &labeled_rest,
        recipe.meta_fraction,
        derive_seed(recipe.seed, "carve", fold as u64),
    )?;
    Ok((train, meta, test, rest))
}

/// Trains one recipe on every fold but `fold` and scores it on `fold`.
pub fn run_fold(corpus: &Corpus, fold: usize, recipe: &TrainRecipe, cache: &mut PretrainCache) -> Result<FoldOutcome> {
    recipe.validate()?;
    let (train_idx, meta_idx, test_idx, rest) = fold_split(corpus, fold, recipe)?;
    let key = |i: &usize| {
        (
            corpus.sessions[*i].user_id.as_str(),
            corpus.sessions[*i].video_id.as_str(),
        )
    };
    let test_keys: HashSet<(&str, &str)> = test_idx.iter().map(key).collect();
    if train_idx.iter().chain(&meta_idx).any(|i| test_keys.contains(&key(i))) {
        return Err(Error::Split(format!(
            "fold {fold}: training data overlaps the test fold"
        )));
    }

    let f = fold as u64;
    let enc = &recipe.encoding;
    let train = build_samples(corpus, &train_idx, recipe.model, enc)?;
    let test = build_samples(corpus, &test_idx, recipe.model, enc)?;
    if train.samples.is_empty() || test.samples.is_empty() {
        return Err(Error::Empty("fold samples"));
    }

    let init_seed = derive_seed(recipe.seed, "init", f);
    let mut model = match recipe.model {
        ModelKind::Cnn => CfaPredictor::cnn(
            input_dim(recipe.model),
            recipe.cnn_channels,
            recipe.cnn_width,
            init_seed,
        )?,
        m => CfaPredictor::gru(input_dim(m), recipe.hidden_dim, init_seed)?,
    };
    let mut pretrain_history = None;
    if recipe.pretrain {
        let rec = cache.get_or_train(corpus, &rest, fold, recipe)?;
        model.load_pretrained(&rec.gru)?;
        pretrain_history = Some(rec.history_csv.clone());
    }

    let batch_seed = derive_seed(recipe.seed, "batches", f);
    let meta_used = if recipe.meta {
        subsample(&meta_idx, recipe.meta_usage, derive_seed(recipe.seed, "usage", f))?
    } else {
        Vec::new()
    };
    let (history, meta_history, weighting, clusters, selection, meta_labels) = if recipe.meta && !meta_used.is_empty() {
        let meta = build_samples(corpus, &meta_used, recipe.model, enc)?;
        let criterion = recipe.criterion.expect("validated");
        let features: Vec<Vec<f64>> = meta
            .samples
            .iter()
            .map(|s| build_static(&corpus.sessions[s.session]).features(criterion))
            .collect();
        let labels: Vec<bool> = meta.samples.iter().map(|s| s.label.cfa).collect();
        let km = KMeansConfig {
            restarts: recipe.kmeans_restarts,
            max_iter: recipe.kmeans_max_iter,
        };
        let (set, sel) = cluster_meta(
            &features,
            &labels,
            criterion,
            (recipe.k_min, recipe.k_max),
            derive_seed(recipe.seed, "cluster", f),
            &km,
        )?;
        let mut net = WeightingNet::new(recipe.weight_hidden, derive_seed(recipe.seed, "wnet", f))?;
        let cfg = MetaConfig {
            alpha: recipe.lr,
            beta: recipe.meta_lr,
            batch_size: recipe.batch_size,
            meta_batch_size: recipe.meta_batch_size,
            epochs: recipe.epochs,
            seed: batch_seed,
            meta_seed: derive_seed(recipe.seed, "meta_batches", f),
            standardize_loss: recipe.standardize_loss,
            theta_per_batch: recipe.theta_per_batch,
            verify_lookahead: recipe.verify_lookahead,
        };
        let h = train_clustered_meta(
            &mut model,
            &train.samples,
            &meta.samples,
            &set,
            &mut net,
            &cfg,
            |_, _| Ok(None),
        )?;
        (h.epochs.clone(), Some(h), Some(net), Some(set), sel, labels)
    } else {
        let cfg = SgdConfig {
            lr: recipe.lr,
            batch_size: recipe.batch_size,
            epochs: recipe.epochs,
            seed: batch_seed,
        };
        (
            fit(&mut model, &train.samples, None, &cfg)?,
            None,
            None,
            None,
            None,
            Vec::new(),
        )
    };

    let mut predictions = Vec::with_capacity(test.samples.len());
    for s in &test.samples {
        predictions.push((s.session, model.classify(&s.input)?, s.label.cfa));
    }
    let preds: Vec<bool> = predictions.iter().map(|p| p.1.cfa).collect();
    let labels: Vec<bool> = predictions.iter().map(|p| p.2).collect();
    Ok(FoldOutcome {
        fold,
        score: score(&preds, &labels, recipe.positive_cfa)?,
        predictions,
        model,
        history,
        meta_history,
        weighting,
        clusters,
        meta_labels,
        selection,
        train_size: train.samples.len(),
        meta_size: meta_used.len(),
        dropped: train.dropped.len() + test.dropped.len(),
        pretrain_history,
    })
}

#[derive(Clone, Debug)]
pub struct CvResult {
    pub report: EvalReport,
    pub outcomes: Vec<FoldOutcome>,
}

/// K-fold cross-validation of one recipe over the corpus's folds.
pub fn cross_validate(corpus: &Corpus, recipe: &TrainRecipe, cache: &mut PretrainCache) -> Result<CvResult> {
    let k = corpus.num_folds();
    if k < 2 {
        return Err(Error::Split("corpus needs at least two assigned folds".into()));
    }
    let mut outcomes = Vec::with_capacity(k);
    for fold in 0..k {
        log::info!("{}: fold {}/{}", recipe.label(), fold + 1, k);
        outcomes.push(run_fold(corpus, fold, recipe, cache)?);
    }
    let folds = outcomes
        .iter()
        .map(|o| FoldScore {
            fold: o.fold,
            score: o.score,
        })
        .collect();
    Ok(CvResult {
        report: EvalReport::from_folds(recipe.label(), recipe.fingerprint(), folds),
        outcomes,
    })
}

pub const SWEEP_FRACTIONS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub fraction: f64,
    /// Meta-set size used on each fold.
    pub meta_sizes: Vec<usize>,
    pub report: EvalReport,
}

/// Cross-validates a meta recipe at each meta-usage fraction. The
/// subsets are nested, and fraction 0 trains without reweighting.
pub fn meta_usage_sweep(
    corpus: &Corpus,
    recipe: &TrainRecipe,
    fractions: &[f64],
    cache: &mut PretrainCache,
) -> Result<Vec<SweepPoint>> {
    if !recipe.meta {
        return Err(Error::Config(
            "the meta-usage sweep needs a meta-learning recipe".into(),
        ));
    }
    fractions
        .iter()
        .map(|&fraction| {
            let r = TrainRecipe {
                meta_usage: fraction,
                ..recipe.clone()
            };
            let cv = cross_validate(corpus, &r, cache)?;
            Ok(SweepPoint {
                fraction,
                meta_sizes: cv.outcomes.iter().map(|o| o.meta_size).collect(),
                report: cv.report,
            })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("fraction,acc_mean,acc_std,f1_mean,f1_std,meta_sizes\n");
    for p in points {
        let sizes: Vec<String> = p.meta_sizes.iter().map(|m| m.to_string()).collect();
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.fraction,
            p.report.acc_mean,
            p.report.acc_std,
            p.report.f1_mean,
            p.report.f1_std,
            sizes.join(";")
        ));
    }
    s
}

/// Gram frequencies over one subset of test sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct GramDistribution {
    pub subset: String,
    pub sessions: usize,
    pub total_grams: usize,
    /// Sorted by frequency (descending), then gram.
    pub frequencies: Vec<(Gram, f64)>,
}

impl GramDistribution {
    pub fn top(&self, n: usize) -> &[(Gram, f64)] {
        &self.frequencies[..n.min(self.frequencies.len())]
    }

    /// Share of all grams taken by the two most frequent ones.
    pub fn top2_share(&self) -> f64 {
        self.top(2).iter().map(|(_, f)| f).sum()
    }

    /// Total frequency of grams satisfying `pred`.
    pub fn mass(&self, pred: impl Fn(&Gram) -> bool) -> f64 {
        self.frequencies.iter().filter(|(g, _)| pred(g)).map(|(_, f)| f).sum()
    }

    /// 1-based rank of the most frequent gram satisfying `pred`.
    pub fn best_rank(&self, pred: impl Fn(&Gram) -> bool) -> Option<usize> {
        self.frequencies.iter().position(|(g, _)| pred(g)).map(|r| r + 1)
    }
}

pub fn contains_skip_forward(g: &Gram) -> bool {
    g.contains(&EventType::SkipForward)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramAnalytics {
    pub n: usize,
    pub distributions: Vec<GramDistribution>,
    /// Subsets left out because they had no grams.
    pub omitted: Vec<String>,
}

impl GramAnalytics {
    pub fn get(&self, subset: &str) -> Option<&GramDistribution> {
        self.distributions.iter().find(|d| d.subset == subset)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("subset,gram,frequency\n");
        for d in &self.distributions {
            for (g, f) in &d.frequencies {
                s.push_str(&format!("{},{},{}\n", d.subset, gram_label(g), f));
            }
        }
        s
    }

    pub fn summary(&self, top: usize) -> String {
        let mut s = String::new();
        for d in &self.distributions {
            s.push_str(&format!(
                "{} ({} sessions, {} grams, top-2 share {:.4})\n",
                d.subset,
                d.sessions,
                d.total_grams,
                d.top2_share()
            ));
            for (g, f) in d.top(top) {
                s.push_str(&format!("  {:<12} {:.4}\n", gram_label(g), f));
            }
        }
        for o in &self.omitted {
            s.push_str(&format!("{o}: no grams, omitted\n"));
        }
        s
    }
}

/// Subset names, in report order.
pub const GRAM_SUBSETS: [&str; 6] = ["CFA", "non-CFA", "TP", "FN", "TN", "FP"];

/// n-gram distributions of the pre-answer clicks of test sessions,
/// split by true label and by confusion outcome (CFA as positive).
pub fn gram_analytics(corpus: &Corpus, predictions: &[(usize, Prediction, bool)], n: usize) -> Result<GramAnalytics> {
    let mut counts: Vec<BTreeMap<Gram, usize>> = vec![BTreeMap::new(); GRAM_SUBSETS.len()];
    let mut sessions = vec![0usize; GRAM_SUBSETS.len()];
    for (i, pred, cfa) in predictions {
        let types: Vec<EventType> = corpus.sessions[*i]
            .pre_answer_events()
            .iter()
            .map(|e| e.event_type)
            .collect();
        let enc = ngram_encode(&types, n)?;
        let outcome = match (pred.cfa, *cfa) {
            (true, true) => 2,
            (false, true) => 3,
            (false, false) => 4,
            (true, false) => 5,
        };
        for subset in [if *cfa { 0 } else { 1 }, outcome] {
            sessions[subset] += 1;
            for g in &enc.grams {
                *counts[subset].entry(g.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut distributions = Vec::new();
    let mut omitted = Vec::new();
    for (s, c) in counts.into_iter().enumerate() {
        let total: usize = c.values().sum();
        if total == 0 {
            omitted.push(GRAM_SUBSETS[s].to_string());
            continue;
        }
        let mut frequencies: Vec<(Gram, f64)> = c.into_iter().map(|(g, k)| (g, k as f64 / total as f64)).collect();
        frequencies.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        distributions.push(GramDistribution {
            subset: GRAM_SUBSETS[s].to_string(),
            sessions: sessions[s],
            total_grams: total,
            frequencies,
        });
    }
    Ok(GramAnalytics {
        n,
        distributions,
        omitted,
    })
}

/// Method label of the out-of-scope latent-variable baseline, listed
/// for completeness with no metrics.
pub const LATENT_VAR_LABEL: &str = "latent-var";

fn fmt_metric(mean: f64, std: f64) -> (String, String) {
    (format!("{mean:.4}"), format!("{std:.4}"))
}

/// One CSV row per report, optionally preceded by the latent-variable
/// placeholder row.
pub fn table_csv(reports: &[EvalReport], with_placeholder: bool) -> String {
    let mut s = String::from("method,acc_mean,acc_std,f1_mean,f1_std,fingerprint\n");
    if with_placeholder {
        s.push_str(&format!("{LATENT_VAR_LABEL},NA,NA,NA,NA,NA\n"));
    }
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.label, r.acc_mean, r.acc_std, r.f1_mean, r.f1_std, r.fingerprint
        ));
    }
    s
}

pub fn table_text(reports: &[EvalReport], with_placeholder: bool) -> String {
    let mut rows: Vec<[String; 3]> = Vec::new();
    if with_placeholder {
        rows.push([LATENT_VAR_LABEL.to_string(), "n/a".into(), "n/a".into()]);
    }
    for r in reports {
        let (am, asd) = fmt_metric(r.acc_mean, r.acc_std);
        let (fm, fsd) = fmt_metric(r.f1_mean, r.f1_std);
        rows.push([r.label.clone(), format!("{am} ± {asd}"), format!("{fm} ± {fsd}")]);
    }
    let header = ["method".to_string(), "ACC".to_string(), "F1".to_string()];
    let widths: Vec<usize> = (0..3)
        .map(|c| {
            rows.iter()
                .chain(std::iter::once(&header))
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |r: &[String; 3]| {
        format!(
            "{:<w0$}  {:<w1$}  {:<w2$}\n",
            r[0],
            r[1],
            r[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        )
        .trim_end()
        .to_string()
            + "\n"
    };
    let mut s = line(&header);
    for r in &rows {
        s.push_str(&line(r));
    }
    s
}

pub fn folds_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("method,fold,acc,f1,tp,fp,tn,fn\n");
    for r in reports {
        for f in &r.folds {
            let c = f.score.confusion;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.label, f.fold, f.score.acc, f.score.f1, c.tp, c.fp, c.tn, c.fn_
            ));
        }
    }
    s
}

pub fn predictions_csv(corpus: &Corpus, outcomes: &[FoldOutcome]) -> String {
    let mut s = String::from("fold,session,p_cfa,predicted,label\n");
    for o in outcomes {
        for (i, p, l) in &o.predictions {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                o.fold,
                corpus.sessions[*i].id(),
                p.probabilities[0],
                p.cfa as u8,
                *l as u8
            ));
        }
    }
    s
}

pub fn epochs_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,acc\n");
    for e in history {
        let acc = e.val_acc.map(|a| a.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, acc));
    }
    s
}

pub fn silhouette_csv(sel: &KSelection) -> String {
    let mut s = String::from("k,silhouette\n");
    for (k, v) in &sel.curve {
        s.push_str(&format!("{k},{v}\n"));
    }
    s
}

/// Per-cluster size, label entropy, CFA count and centroid.
pub fn cluster_summary(set: &MetaClusterSet, labels: &[bool]) -> String {
    let mut s = String::from("position,size,cfa,entropy,centroid\n");
    for (p, c) in set.clusters.iter().enumerate() {
        let cfa = c.iter().filter(|&&i| labels[i]).count();
        let centroid: Vec<String> = set.centroids[p].iter().map(|v| format!("{v:.3}")).collect();
        s.push_str(&format!(
            "{p},{},{cfa},{},{}\n",
            c.len(),
            set.label_entropy[p],
            centroid.join(";")
        ));
    }
    s
}
