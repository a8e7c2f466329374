//! Subcommand pipelines and run-directory handling.

use std::path::{Path, PathBuf};

use clickcfa::data::{
    default_archetypes, fold_fingerprint, generate_synthetic, parse_archetypes, parse_log, split_folds,
    write_archetypes, write_corpus, Corpus, ParseSummary,
};
use clickcfa::eval::{
    self, cluster_summary, cross_validate, epochs_csv, folds_csv, gram_analytics, meta_usage_sweep, predictions_csv,
    pretrain_on, run_fold, silhouette_csv, sweep_csv, table_csv, table_text, EvalReport, FoldOutcome, PretrainCache,
    SWEEP_FRACTIONS,
};
use clickcfa::recipe::{TrainRecipe, PRESETS};
use clickcfa_neural::checkpoint;

use crate::config::RunConfig;
use crate::failure::Failure;

pub const DEFAULT_SESSIONS: usize = 2000;
pub const DEFAULT_GRAM_N: usize = 4;
pub const TOP_GRAMS: usize = 10;

/// `--out-root`, else `$CLICKCFA_RUNS`, else `./runs`.
pub fn out_root(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("CLICKCFA_RUNS").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Creates `<root>/<timestamp>-<command>-<fingerprint prefix>`, adding a
/// numeric suffix when that name is taken.
pub fn create_run_dir(root: &Path, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(root).map_err(|e| Failure::Data(format!("{}: {e}", root.display())))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{stamp}-{}-{}", cfg.command, &cfg.fingerprint()[..12]);
    for n in 1.. {
        let name = if n == 1 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Failure::Data(format!("{}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn subdir(dir: &Path, name: &str) -> Result<PathBuf, Failure> {
    let d = dir.join(name);
    std::fs::create_dir_all(&d).map_err(|e| Failure::Data(format!("{}: {e}", d.display())))?;
    Ok(d)
}

/// Resolves inputs with their defaults, records the config and runs the
/// command. Returns the run directory.
pub fn execute(root: &Path, cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let mut cfg = cfg.clone();
    fill_defaults(&mut cfg)?;
    let dir = create_run_dir(root, &cfg)?;
    write(&dir, "config.cfg", &cfg.to_text())?;
    log::info!("run directory {}", dir.display());
    match cfg.command.as_str() {
        "generate" => generate(&dir, &cfg)?,
        "parse" => parse(&dir, &cfg)?,
        "pretrain" => pretrain(&dir, &cfg)?,
        "train" => train(&dir, &cfg)?,
        "evaluate" => evaluate(&dir, &cfg)?,
        "sweep" => sweep(&dir, &cfg)?,
        "analyze" => analyze(&dir, &cfg)?,
        other => return Err(Failure::Usage(format!("unknown command `{other}`"))),
    }
    Ok(dir)
}

fn fill_defaults(cfg: &mut RunConfig) -> Result<(), Failure> {
    match cfg.command.as_str() {
        "generate" => {
            if cfg.input("n").is_none() {
                cfg.set_input("n", DEFAULT_SESSIONS.to_string());
            }
        }
        "train" => {
            if cfg.input("fold").is_none() {
                cfg.set_input("fold", "0");
            }
        }
        "sweep" => {
            if cfg.input("fractions").is_none() {
                let f: Vec<String> = SWEEP_FRACTIONS.iter().map(|f| f.to_string()).collect();
                cfg.set_input("fractions", f.join(","));
            }
        }
        "analyze" if cfg.input("gram_n").is_none() => {
            cfg.set_input("gram_n", DEFAULT_GRAM_N.to_string());
        }
        _ => {}
    }
    if cfg.command != "generate" {
        cfg.corpus_path()?;
    }
    if cfg.input("recipe") == Some("all") && cfg.command != "evaluate" {
        return Err(Failure::Usage("`--recipe all` is only valid for `evaluate`".into()));
    }
    Ok(())
}

fn generate(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let archetypes = match cfg.input("archetypes") {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Data(format!("{p}: {e}")))?;
            parse_archetypes(&text)?
        }
        None => default_archetypes(),
    };
    let n: usize = cfg.parse_input("n")?.unwrap_or(DEFAULT_SESSIONS);
    let corpus = generate_synthetic(&archetypes, n, cfg.recipe.seed)?;
    write_corpus(&corpus, dir.join("corpus.tsv"))?;
    write(dir, "archetypes.cfg", &write_archetypes(&archetypes))?;
    let cfa = (0..corpus.len())
        .filter(|&i| corpus.label(i).map(|l| l.cfa).unwrap_or(false))
        .count();
    println!(
        "generated {} sessions ({cfa} CFA) from {} archetypes",
        corpus.len(),
        archetypes.len()
    );
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<(Corpus, ParseSummary), Failure> {
    let path = cfg.corpus_path()?;
    let r = &cfg.recipe;
    let (mut corpus, summary) = parse_log(&path, &r.encoding)?;
    split_folds(&mut corpus, r.n_folds, r.seed, r.stratify)?;
    Ok((corpus, summary))
}

fn parse(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let (corpus, s) = load_corpus(cfg)?;
    let labeled = corpus.labeled_indices();
    let cfa = labeled
        .iter()
        .filter(|&&i| corpus.label(i).map(|l| l.cfa).unwrap_or(false))
        .count();
    let events: usize = corpus.sessions.iter().map(|x| x.len()).sum();
    let mut text = String::new();
    for (k, v) in [
        ("sessions", corpus.len()),
        ("labeled_sessions", labeled.len()),
        ("cfa_sessions", cfa),
        ("events_after_coalescing", events),
        ("event_lines", s.event_lines),
        ("malformed_events", s.malformed_events),
        ("quiz_lines", s.quiz_lines),
        ("malformed_quiz", s.malformed_quiz),
        ("orphan_quiz", s.orphan_quiz),
        ("repeat_submissions", s.repeat_submissions),
        ("retyped_events", s.retyped_events),
        ("coalesced_events", s.coalesced_events),
    ] {
        text.push_str(&format!("{k} = {v}\n"));
    }
    for f in 0..corpus.num_folds() {
        text.push_str(&format!("fold_{f}_sessions = {}\n", corpus.fold(f).len()));
    }
    text.push_str(&format!("fold_fingerprint = {}\n", fold_fingerprint(&corpus)));
    write(dir, "summary.txt", &text)?;

    let assign = corpus.fold_assignments.as_ref().expect("folds assigned");
    let mut csv = String::from("session,fold,events,pre_answer_events,labeled,cfa\n");
    for (i, x) in corpus.sessions.iter().enumerate() {
        let cfa = corpus.label(i).map(|l| (l.cfa as u8).to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            x.id(),
            assign[i],
            x.len(),
            x.pre_answer_events().len(),
            x.is_labeled() as u8,
            cfa
        ));
    }
    write(dir, "sessions.csv", &csv)?;
    print!("{text}");
    Ok(())
}

fn pretrain(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let (corpus, _) = load_corpus(cfg)?;
    // Without a held-out fold every session is pre-training data.
    let fold: Option<usize> = cfg.parse_input("fold")?;
    let (pool, seed_index) = match fold {
        Some(f) => (eval::fold_split(&corpus, f, &cfg.recipe)?.3, f),
        None => ((0..corpus.len()).collect(), 0),
    };
    let rec = pretrain_on(&corpus, &pool, seed_index, &cfg.recipe)?;
    checkpoint::save(&rec.gru, &dir.join("gru.ckpt"))?;
    write(dir, "pretrain_history.csv", &rec.history_csv)?;
    let summary = format!(
        "pool_sessions = {}\nsamples = {}\nepochs = {}\nstop = {:?}\n",
        pool.len(),
        rec.samples,
        rec.history_csv.lines().count().saturating_sub(1),
        rec.stop
    );
    write(dir, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn metrics_csv(outcomes: &[FoldOutcome]) -> String {
    let mut s = String::from("fold,acc,precision,recall,f1,tp,fp,tn,fn,train_size,meta_size,dropped\n");
    for o in outcomes {
        let (sc, c) = (&o.score, &o.score.confusion);
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            o.fold,
            sc.acc,
            sc.precision,
            sc.recall,
            sc.f1,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            o.train_size,
            o.meta_size,
            o.dropped
        ));
    }
    s
}

fn write_fold(dir: &Path, corpus: &Corpus, o: &FoldOutcome) -> Result<(), Failure> {
    checkpoint::save(&o.model.store, &dir.join("model.ckpt"))?;
    write(dir, "epochs.csv", &epochs_csv(&o.history))?;
    write(
        dir,
        "predictions.csv",
        &predictions_csv(corpus, std::slice::from_ref(o)),
    )?;
    write(dir, "metrics.csv", &metrics_csv(std::slice::from_ref(o)))?;
    if let Some(net) = &o.weighting {
        checkpoint::save(&net.store, &dir.join("weighting.ckpt"))?;
    }
    if let Some(h) = &o.meta_history {
        write(dir, "meta_history.csv", &h.to_csv())?;
    }
    if let Some(sel) = &o.selection {
        write(dir, "silhouette.csv", &silhouette_csv(sel))?;
    }
    if let Some(set) = &o.clusters {
        write(dir, "clusters.csv", &cluster_summary(set, &o.meta_labels))?;
    }
    if let Some(h) = &o.pretrain_history {
        write(dir, "pretrain_history.csv", h)?;
    }
    Ok(())
}

fn train(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let (corpus, _) = load_corpus(cfg)?;
    let fold: usize = cfg.parse_input("fold")?.unwrap_or(0);
    if fold >= corpus.num_folds() {
        return Err(Failure::Usage(format!(
            "fold {fold} out of range 0..{}",
            corpus.num_folds()
        )));
    }
    let mut cache = PretrainCache::new();
    let o = run_fold(&corpus, fold, &cfg.recipe, &mut cache)?;
    write_fold(dir, &corpus, &o)?;
    println!(
        "{} fold {fold}: ACC {:.4} F1 {:.4} ({} test sessions)",
        cfg.recipe.label(),
        o.score.acc,
        o.score.f1,
        o.score.confusion.total()
    );
    Ok(())
}

/// Directory-safe name of a recipe.
fn slug(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            'a'..='z' | '0'..='9' | '-' => Some(c),
            'A'..='Z' => Some(c.to_ascii_lowercase()),
            '(' => Some('-'),
            _ => None,
        })
        .collect()
}

fn evaluate_recipes(cfg: &RunConfig) -> Result<Vec<(String, TrainRecipe)>, Failure> {
    if cfg.input("recipe") == Some("all") {
        PRESETS
            .iter()
            .map(|&n| Ok((n.to_string(), TrainRecipe::preset(n, &cfg.recipe)?)))
            .collect()
    } else {
        Ok(vec![(slug(&cfg.recipe.label()), cfg.recipe.clone())])
    }
}

fn evaluate(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let (corpus, _) = load_corpus(cfg)?;
    let recipes = evaluate_recipes(cfg)?;
    let grid = recipes.len() > 1;
    let mut cache = PretrainCache::new();
    let mut reports: Vec<EvalReport> = Vec::new();
    for (name, recipe) in &recipes {
        let cv = cross_validate(&corpus, recipe, &mut cache)?;
        let rdir = subdir(dir, name)?;
        write(&rdir, "predictions.csv", &predictions_csv(&corpus, &cv.outcomes))?;
        write(&rdir, "metrics.csv", &metrics_csv(&cv.outcomes))?;
        for o in &cv.outcomes {
            write_fold(&subdir(&rdir, &format!("fold-{}", o.fold))?, &corpus, o)?;
        }
        log::info!(
            "{}: ACC {:.4} F1 {:.4}",
            cv.report.label,
            cv.report.acc_mean,
            cv.report.f1_mean
        );
        reports.push(cv.report);
    }
    write(dir, "table.csv", &table_csv(&reports, grid))?;
    write(dir, "folds.csv", &folds_csv(&reports))?;
    let text = table_text(&reports, grid);
    write(dir, "table.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn parse_fractions(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|f| {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad fraction `{f}`")))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Failure::Usage(format!("fraction {v} outside [0, 1]")))
            }
        })
        .collect()
}

fn sweep(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let (corpus, _) = load_corpus(cfg)?;
    let fractions = parse_fractions(cfg.input("fractions").unwrap_or("1"))?;
    let mut cache = PretrainCache::new();
    let points = meta_usage_sweep(&corpus, &cfg.recipe, &fractions, &mut cache)?;
    write(dir, "sweep.csv", &sweep_csv(&points))?;
    let reports: Vec<EvalReport> = points
        .iter()
        .map(|p| EvalReport {
            label: format!("{} usage {}", p.report.label, p.fraction),
            ..p.report.clone()
        })
        .collect();
    write(dir, "folds.csv", &folds_csv(&reports))?;
    let text = table_text(&reports, false);
    write(dir, "sweep.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn analyze(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let (corpus, _) = load_corpus(cfg)?;
    let n: usize = cfg.parse_input("gram_n")?.unwrap_or(DEFAULT_GRAM_N);
    let mut cache = PretrainCache::new();
    let cv = cross_validate(&corpus, &cfg.recipe, &mut cache)?;
    let preds: Vec<_> = cv.outcomes.iter().flat_map(|o| o.predictions.iter().cloned()).collect();
    let grams = gram_analytics(&corpus, &preds, n)?;
    write(dir, "grams.csv", &grams.to_csv())?;
    let text = grams.summary(TOP_GRAMS);
    write(dir, "grams.txt", &text)?;
    write(dir, "predictions.csv", &predictions_csv(&corpus, &cv.outcomes))?;
    write(dir, "table.csv", &table_csv(std::slice::from_ref(&cv.report), false))?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("pre-GRU-meta(C2)"), "pre-gru-meta-c2");
        assert_eq!(slug("3-gram"), "3-gram");
        assert_eq!(slug("CNN"), "cnn");
    }

    #[test]
    fn fractions_parse_and_validate() {
        assert_eq!(parse_fractions("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_fractions("1.5").is_err());
        assert!(parse_fractions("x").is_err());
    }

    #[test]
    fn run_dirs_get_suffixes() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::new("parse");
        let a = create_run_dir(tmp.path(), &cfg).unwrap();
        let b = create_run_dir(tmp.path(), &cfg).unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().contains("-parse-"));
    }
}
