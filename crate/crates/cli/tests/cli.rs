use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clickcfa"))
        .arg("--out-root")
        .arg(root)
        .args(args)
        .output()
        .unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    PathBuf::from(
        stdout
            .lines()
            .find_map(|l| l.strip_prefix("run directory: "))
            .expect("run directory line"),
    )
}

#[test]
fn unknown_flag_is_a_usage_error_with_help() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(run(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    let corpus = tmp.path().join("c.tsv");
    std::fs::write(&corpus, "").unwrap();
    let out = run(
        tmp.path(),
        &["train", "--corpus", corpus.to_str().unwrap(), "--set", "bogus_key=1"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_corpus_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.tsv");
    std::fs::write(&bad, "not\ta\tclick\nlog\n").unwrap();
    let out = run(tmp.path(), &["parse", "--corpus", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generation_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_dir(&run(tmp.path(), &["generate", "--n", "60", "--seed", "3"]));
    let b = run_dir(&run(tmp.path(), &["generate", "--n", "60", "--seed", "3"]));
    assert_ne!(a, b);
    assert_eq!(
        std::fs::read(a.join("corpus.tsv")).unwrap(),
        std::fs::read(b.join("corpus.tsv")).unwrap()
    );
}

#[test]
fn full_grid_gives_ten_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = run_dir(&run(tmp.path(), &["generate", "--n", "120", "--seed", "5"])).join("corpus.tsv");
    let out = run(
        tmp.path(),
        &[
            "evaluate",
            "--recipe",
            "all",
            "--corpus",
            corpus.to_str().unwrap(),
            "--epochs",
            "1",
            "--hidden-dim",
            "4",
            "--pretrain-epochs",
            "1",
            "--set",
            "pretrain_max_samples=200",
            "--set",
            "cnn_channels=4",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let table = std::fs::read_to_string(dir.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 11, "{table}");
    assert!(table.lines().any(|l| l.starts_with("latent-var,")));
    for name in ["gru", "pre-gru-meta-c2", "3-gram", "cnn"] {
        assert!(dir.join(name).join("metrics.csv").is_file(), "{name}");
        assert!(dir.join(name).join("fold-0").join("model.ckpt").is_file(), "{name}");
    }
}
