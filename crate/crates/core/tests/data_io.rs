mod common;

use std::collections::HashSet;

use clickcfa::clickstream::{build_static, Criterion, EncodingConfig, EventType};
use clickcfa::clustering::{kmeans, KMeansConfig};
use clickcfa::data::{
    carve_meta, default_archetypes, generate_synthetic, parse_log, split_folds, subsample, write_corpus, Corpus,
};
use clickcfa::Error;

const EVENTS: &str = "\
u1\tv1\t0\t0\t1000\t1\t1
u2\tv1\t3\t80\t2050\t1\t1
u1\tv1\t1\t10\t1010\t0\t1
u1\tv1\t1\t10\t1012\t0\t1
u2\tv1\t0\t0\t2000\t1\t1
u1\tv1\t0\t10\t1020\t1\t1
u1\tv1\t0\t50\t1030\t1\t1
u2\tv1\t1\t30\t2030\t0\t1
u1\tv1\t4\t55\t1035\t1\t1.5
u2\tv1\t0\t30\t2040\t1\t1
u1\tv1\t2\t40\t1045\t1\t1.5
u2\tv1\t1\t85\t2055\t0\t1
";

const QUIZ: &str = "\
u1\tv1\t10\t10\t1040
u2\tv1\t10\t10\t2100
u2\tv1\t4\t10\t2045
u9\tv9\t1\t10\t5
";

fn fixture(events: &str) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.tsv");
    std::fs::write(&path, events).unwrap();
    std::fs::write(dir.path().join("fixture.quiz.tsv"), QUIZ).unwrap();
    std::fs::write(dir.path().join("fixture.videos.tsv"), "v1\t100\n").unwrap();
    (dir, path)
}

#[test]
fn twelve_record_fixture_matches_hand_audit() {
    use EventType::*;
    let (_dir, path) = fixture(EVENTS);
    let (corpus, s) = parse_log(&path, &EncodingConfig::default()).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!(corpus.dataset_name, "fixture");
    assert_eq!((s.event_lines, s.malformed_events), (12, 0));
    assert_eq!((s.quiz_lines, s.orphan_quiz, s.repeat_submissions), (4, 1, 1));
    // The pause pair merges; the logged Play at 50 s is a forward skip.
    assert_eq!((s.coalesced_events, s.retyped_events), (1, 1));

    let a = &corpus.sessions[0];
    assert_eq!(a.key(), ("u1", "v1"));
    assert_eq!(a.types(), vec![Play, Pause, Play, SkipForward, RateChange, SkipBack]);
    assert_eq!(a.events[1].timestamp, 1012.0);
    assert_eq!(a.video_length, 100.0);
    assert_eq!(a.pre_answer_events().len(), 5);
    assert!(corpus.label(0).unwrap().cfa);

    let b = &corpus.sessions[1];
    assert_eq!(b.key(), ("u2", "v1"));
    assert_eq!(b.types(), vec![Play, Pause, Play, SkipForward, Pause]);
    // The earliest of the two submissions counts.
    assert_eq!(b.answer_timestamp, Some(2045.0));
    assert_eq!(b.pre_answer_events().len(), 3);
    assert!(!corpus.label(1).unwrap().cfa);
    assert_eq!(build_static(b).per_type_counts, [2, 2, 0, 1, 0]);
}

#[test]
fn malformed_line_is_skipped_and_counted() {
    let (_dir, path) = fixture(&format!("{EVENTS}u3\tv1\tx\t1\t2\t1\t1\n"));
    let (corpus, s) = parse_log(&path, &EncodingConfig::default()).unwrap();
    assert_eq!(corpus.len(), 2);
    assert_eq!((s.event_lines, s.malformed_events), (13, 1));
}

#[test]
fn mostly_malformed_file_is_rejected() {
    let (_dir, path) = fixture("a\tb\n1\t2\t3\nu1\tv1\t0\t0\t1\t1\t1\n");
    assert!(matches!(
        parse_log(&path, &EncodingConfig::default()),
        Err(Error::CorpusRejected { malformed: 2, total: 3 })
    ));
}

#[test]
fn empty_file_gives_empty_corpus() {
    let (_dir, path) = fixture("");
    let (corpus, s) = parse_log(&path, &EncodingConfig::default()).unwrap();
    assert!(corpus.is_empty());
    assert_eq!(s.event_lines, 0);
    assert!(parse_log(path.with_file_name("missing.tsv"), &EncodingConfig::default()).is_err());
}

#[test]
fn write_then_parse_is_identity() {
    let corpus = generate_synthetic(&default_archetypes(), 200, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.tsv");
    write_corpus(&corpus, &path).unwrap();
    let (back, s) = parse_log(&path, &EncodingConfig::default()).unwrap();
    assert_eq!((s.retyped_events, s.coalesced_events, s.malformed_events), (0, 0, 0));
    assert_eq!(back.sessions, corpus.sessions);
    assert_eq!(back.archetypes, corpus.archetypes);
}

fn tiny(n: usize) -> Corpus {
    let mut c = generate_synthetic(&default_archetypes(), n, 1).unwrap();
    c.archetypes = None;
    c
}

fn fold_sizes(c: &Corpus) -> Vec<usize> {
    let mut sizes: Vec<usize> = (0..c.num_folds()).map(|f| c.fold(f).len()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[test]
fn fold_sizes_and_determinism() {
    let mut c = tiny(10);
    split_folds(&mut c, 5, 3, false).unwrap();
    assert_eq!(fold_sizes(&c), vec![2; 5]);
    let mut c = tiny(11);
    split_folds(&mut c, 5, 3, false).unwrap();
    assert_eq!(fold_sizes(&c), vec![3, 2, 2, 2, 2]);
    let first = c.fold_assignments.clone();
    split_folds(&mut c, 5, 3, false).unwrap();
    assert_eq!(c.fold_assignments, first);
    assert!(split_folds(&mut tiny(4), 5, 3, false).is_err());
    assert!(split_folds(&mut tiny(4), 1, 3, false).is_err());
}

#[test]
fn folds_partition_and_ignore_session_order() {
    let mut c = tiny(137);
    split_folds(&mut c, 5, 8, false).unwrap();
    let mut seen = HashSet::new();
    for f in 0..5 {
        for i in c.fold(f) {
            assert!(seen.insert(i));
        }
    }
    assert_eq!(seen.len(), 137);
    let mut rev = tiny(137);
    rev.sessions.reverse();
    split_folds(&mut rev, 5, 8, false).unwrap();
    let a = c.fold_assignments.as_ref().unwrap();
    let b = rev.fold_assignments.as_ref().unwrap();
    for i in 0..137 {
        assert_eq!(a[i], b[136 - i]);
    }
    let mut strat = tiny(137);
    split_folds(&mut strat, 5, 8, true).unwrap();
    assert_eq!(fold_sizes(&strat).iter().sum::<usize>(), 137);
    assert!(fold_sizes(&strat)[0] - fold_sizes(&strat)[4] <= 1);
}

#[test]
fn meta_carving() {
    let ids: Vec<usize> = (0..100).collect();
    let (train, meta) = carve_meta(&ids, 0.1, 4).unwrap();
    assert_eq!((train.len(), meta.len()), (90, 10));
    let t: HashSet<_> = train.iter().collect();
    assert!(meta.iter().all(|m| !t.contains(m)));
    assert_eq!(carve_meta(&ids, 0.1, 4).unwrap(), (train, meta.clone()));
    assert!(carve_meta(&ids, 0.5, 4).is_err());
    assert!(carve_meta(&ids, 0.0, 4).is_err());
    assert!(carve_meta(&ids[..3], 0.1, 4).is_err());

    let sizes: Vec<usize> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&f| subsample(&meta, f, 2).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![0, 3, 5, 8, 10]);
    let quarter: HashSet<usize> = subsample(&meta, 0.25, 2).unwrap().into_iter().collect();
    let half: HashSet<usize> = subsample(&meta, 0.5, 2).unwrap().into_iter().collect();
    assert!(quarter.is_subset(&half));
}

#[test]
fn synthetic_regeneration_is_bit_identical() {
    let a = generate_synthetic(&default_archetypes(), 150, 21).unwrap();
    let b = generate_synthetic(&default_archetypes(), 150, 21).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(&default_archetypes(), 150, 22).unwrap();
    assert_ne!(a, c);
}

#[test]
fn synthetic_counts_within_three_sigma() {
    let n = 2000;
    let c = generate_synthetic(&default_archetypes(), n, 5).unwrap();
    let truth = c.archetypes.as_ref().unwrap();
    let arch = default_archetypes();
    let k = truth.iter().filter(|&&a| a == 0).count() as f64;
    let expected = n as f64 / 2.0;
    assert!((k - expected).abs() < 3.0 * (n as f64 * 0.25).sqrt(), "{k}");
    for (ai, a) in arch.iter().enumerate() {
        let lens: Vec<f64> = c
            .sessions
            .iter()
            .zip(truth)
            .filter(|(_, &t)| t == ai)
            .map(|(s, _)| s.len() as f64)
            .collect();
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        let lambda = a.mean_session_length as f64;
        assert!(
            (mean - lambda).abs() < 3.0 * (lambda / lens.len() as f64).sqrt(),
            "{} {mean}",
            a.name
        );
    }
}

#[test]
fn degenerate_probability_labels_everything_cfa() {
    let mut a = default_archetypes()[0].clone();
    a.cfa_base_prob = 1.0;
    let c = generate_synthetic(&[a], 100, 3).unwrap();
    assert!((0..100).all(|i| c.label(i).unwrap().cfa));
}

/// Adjusted Rand index from the contingency table.
fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let c2 = |n: f64| n * (n - 1.0) / 2.0;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0f64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let index: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = rows * cols / c2(a.len() as f64);
    (index - expected) / (0.5 * (rows + cols) - expected)
}

#[test]
fn archetypes_are_recoverable_by_kmeans() {
    let c = generate_synthetic(&default_archetypes(), 2000, 6).unwrap();
    let feats: Vec<Vec<f64>> = c
        .sessions
        .iter()
        .map(|s| build_static(s).features(Criterion::C2))
        .collect();
    let r = kmeans(&feats, 2, 1, &KMeansConfig::default()).unwrap();
    let ari = adjusted_rand(&r.assignments, c.archetypes.as_ref().unwrap());
    assert!(ari > 0.9, "ARI {ari}");
}

#[test]
fn skip_penalty_lowers_cfa_rate() {
    let mut arch = default_archetypes();
    arch[1].skip_forward_cfa_penalty = -0.8;
    arch[1].cfa_floor = 0.0;
    let c = generate_synthetic(&arch, 2000, 7).unwrap();
    let truth = c.archetypes.as_ref().unwrap();
    let rate = |a: usize| {
        let ids: Vec<usize> = (0..c.len()).filter(|&i| truth[i] == a).collect();
        ids.iter().filter(|&&i| c.label(i).unwrap().cfa).count() as f64 / ids.len() as f64
    };
    assert!(rate(0) - rate(1) > 0.3, "{} vs {}", rate(0), rate(1));
}
