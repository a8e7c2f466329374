mod common;

use clickcfa::clickstream::{build_full_sequence, EncodingConfig, TimeVaryingEncoding};
use clickcfa::dataset::build_samples;
use clickcfa::eval::{run_fold, PretrainCache};
use clickcfa::model::{CfaPredictor, LossModel};
use clickcfa::pretrain::{expand_corpus, pretrain, PretrainConfig};
use clickcfa::recipe::{ModelKind, TrainRecipe};
use clickcfa::train::{accuracy, per_sample_grads, train_plain, SgdConfig};
use clickcfa_neural::{checkpoint, Tape, Tensor};
use common::rng;
use rand::seq::SliceRandom;

fn sgd(lr: f64, batch_size: usize, epochs: usize) -> SgdConfig {
    SgdConfig {
        lr,
        batch_size,
        epochs,
        seed: 3,
    }
}

#[test]
fn single_sample_is_memorized() {
    let corpus = common::synthetic(20, 1, 2);
    let set = build_samples(&corpus, &[0], ModelKind::Gru, &EncodingConfig::default()).unwrap();
    let mut model = CfaPredictor::gru(5, 8, 2).unwrap();
    train_plain(&mut model, &set.samples, &sgd(0.1, 1, 1000), |_, _| Ok(None)).unwrap();
    let refs: Vec<_> = set.samples.iter().collect();
    let loss = per_sample_grads(&model, &refs).unwrap()[0].0;
    assert!(loss < 0.01, "{loss}");
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let corpus = common::synthetic(40, 1, 2);
    let idx: Vec<usize> = (0..40).collect();
    let set = build_samples(&corpus, &idx, ModelKind::Gru, &EncodingConfig::default()).unwrap();
    let mut model = CfaPredictor::gru(5, 6, 2).unwrap();
    let before = model.store.fingerprint();
    train_plain(&mut model, &set.samples, &sgd(0.0, 8, 3), |_, _| Ok(None)).unwrap();
    assert_eq!(model.store.fingerprint(), before);
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let corpus = common::synthetic(2000, 2, 2);
    let enc = EncodingConfig::default();
    let mut train = build_samples(&corpus, &corpus.fold(0), ModelKind::Gru, &enc)
        .unwrap()
        .samples;
    let mut val = build_samples(&corpus, &corpus.fold(1), ModelKind::Gru, &enc)
        .unwrap()
        .samples;
    let mut r = rng(4);
    for set in [&mut train, &mut val] {
        let mut labels: Vec<_> = set.iter().map(|s| s.label).collect();
        labels.shuffle(&mut r);
        for (s, l) in set.iter_mut().zip(labels) {
            s.label = l;
        }
    }
    let mut model = CfaPredictor::gru(5, 8, 5).unwrap();
    train_plain(&mut model, &train, &sgd(0.1, 32, 5), |_, _| Ok(None)).unwrap();
    let acc = accuracy(&model, &val).unwrap();
    let pos = val.iter().filter(|s| s.label.cfa).count() as f64 / val.len() as f64;
    let majority = pos.max(1.0 - pos);
    assert!((acc - majority).abs() <= 0.05, "acc {acc}, majority {majority}");
}

fn small_recipe(name: &str) -> TrainRecipe {
    let base = TrainRecipe {
        hidden_dim: 12,
        lr: 0.1,
        meta_lr: 0.1,
        epochs: 8,
        pretrain_epochs: 3,
        pretrain_lr: 0.1,
        pretrain_max_samples: 4000,
        seed: 7,
        ..TrainRecipe::default()
    };
    TrainRecipe::preset(name, &base).unwrap()
}

#[test]
fn baselines_learn_the_separable_corpus() {
    let corpus = common::synthetic(2000, 7, 5);
    let mut cache = PretrainCache::new();
    let desk = |name: &str| TrainRecipe {
        hidden_dim: 16,
        epochs: 20,
        ..small_recipe(name)
    };
    let gru = run_fold(&corpus, 0, &desk("gru"), &mut cache).unwrap();
    let cnn = run_fold(&corpus, 0, &desk("cnn"), &mut cache).unwrap();
    let tri = run_fold(&corpus, 0, &desk("3-gram"), &mut cache).unwrap();
    assert!(gru.score.acc >= 0.85, "GRU {}", gru.score.acc);
    assert!(
        cnn.score.acc >= 0.75 && (cnn.score.acc - gru.score.acc).abs() <= 0.05,
        "CNN {}",
        cnn.score.acc
    );
    assert!(tri.score.acc >= 0.75, "3-gram {}", tri.score.acc);
}

#[test]
fn unused_meta_set_reduces_to_plain_training() {
    let corpus = common::synthetic(300, 3, 5);
    let mut cache = PretrainCache::new();
    let plain = run_fold(&corpus, 1, &small_recipe("gru"), &mut cache).unwrap();
    let meta = TrainRecipe {
        meta_usage: 0.0,
        ..small_recipe("gru-meta-c2")
    };
    let reduced = run_fold(&corpus, 1, &meta, &mut cache).unwrap();
    assert_eq!(plain.model.store.fingerprint(), reduced.model.store.fingerprint());
    assert_eq!(plain.predictions, reduced.predictions);
    assert_eq!(reduced.meta_size, 0);
    assert!(reduced.meta_history.is_none());
}

#[test]
fn meta_recipe_weights_vary() {
    let corpus = common::synthetic(600, 3, 5);
    let mut cache = PretrainCache::new();
    let o = run_fold(&corpus, 0, &small_recipe("pre-gru-meta-c2"), &mut cache).unwrap();
    let h = o.meta_history.unwrap();
    assert!(h.iterations.iter().any(|r| r.std_weight > 1e-3));
    assert!(o.pretrain_history.is_some());
    assert!(o.clusters.unwrap().len() >= 2);
}

fn constant_set(rows: usize, sessions: usize) -> Vec<TimeVaryingEncoding> {
    let v0 = [0.25, 0.5, 0.1, 1.0, 0.25];
    (0..sessions)
        .map(|_| TimeVaryingEncoding { rows: vec![v0; rows] })
        .collect()
}

fn pre_cfg(hidden: usize, epochs: usize, seed: u64) -> PretrainConfig {
    PretrainConfig {
        hidden_dim: hidden,
        lr: 0.1,
        batch_size: 16,
        max_epochs: epochs,
        patience: 0,
        min_delta: 1e-5,
        max_samples: 0,
        seed,
    }
}

#[test]
fn constant_corpus_is_learned_exactly() {
    let set = expand_corpus(&constant_set(6, 20), false);
    let out = pretrain(&set, &pre_cfg(4, 60, 1)).unwrap();
    let last = out.history.last().unwrap().1;
    assert!(last < 1e-3, "{last}");
    let s = set.sample(0);
    let mut tape = Tape::new();
    let p = out.net.store.bind(&mut tape);
    let y = out.net.predict(&mut tape, &p, &s.context).unwrap();
    for (a, b) in tape.value(y).data().iter().zip(s.target.data()) {
        assert!((a - b).abs() < 0.05);
    }
}

#[test]
fn context_beats_shuffled_control() {
    let corpus = common::synthetic(120, 5, 5);
    let seqs: Vec<TimeVaryingEncoding> = corpus
        .sessions
        .iter()
        .map(|s| build_full_sequence(s, &EncodingConfig::default()))
        .collect();
    // Same rows, randomly reassigned across sessions and positions.
    let mut pool: Vec<[f64; 5]> = seqs.iter().flat_map(|s| s.rows.clone()).collect();
    pool.shuffle(&mut rng(6));
    let mut it = pool.into_iter();
    let control: Vec<TimeVaryingEncoding> = seqs
        .iter()
        .map(|s| TimeVaryingEncoding {
            rows: (0..s.len()).map(|_| it.next().unwrap()).collect(),
        })
        .collect();
    let cfg = pre_cfg(8, 6, 2);
    let real = pretrain(&expand_corpus(&seqs, false), &cfg).unwrap();
    let ctrl = pretrain(&expand_corpus(&control, false), &cfg).unwrap();
    let (a, b) = (real.history.last().unwrap().1, ctrl.history.last().unwrap().1);
    assert!(a < b, "real {a} vs control {b}");
}

#[test]
fn pretraining_is_deterministic_and_transfers() {
    let corpus = common::synthetic(40, 5, 5);
    let seqs: Vec<_> = corpus
        .sessions
        .iter()
        .map(|s| build_full_sequence(s, &EncodingConfig::default()))
        .collect();
    let set = expand_corpus(&seqs, false);
    let cfg = PretrainConfig {
        max_samples: 300,
        ..pre_cfg(6, 2, 3)
    };
    let a = pretrain(&set, &cfg).unwrap();
    let b = pretrain(&set, &cfg).unwrap();
    assert_eq!(a.net.store.fingerprint(), b.net.store.fingerprint());
    assert_eq!(a.history, b.history);

    let gru = a.net.gru_store().unwrap();
    assert_eq!(gru.len(), 3);
    let mut model = CfaPredictor::gru(5, 6, 9).unwrap();
    let head_before = model.store.get("head.w").unwrap().clone();
    model.load_pretrained(&gru).unwrap();
    for p in gru.iter() {
        assert_eq!(model.store.get(&p.name), Some(&p.value));
    }
    assert_eq!(model.store.get("head.w"), Some(&head_before));
    assert!(CfaPredictor::gru(5, 7, 9).unwrap().load_pretrained(&gru).is_err());

    let text = checkpoint::to_string(&model.store);
    let back = checkpoint::from_str(&text).unwrap();
    assert_eq!(back.fingerprint(), model.store().fingerprint());
    let x = Tensor::from_rows(&seqs[0].rows, 5).unwrap();
    assert!(model.probabilities(&x).unwrap().iter().sum::<f64>() - 1.0 < 1e-12);
}
