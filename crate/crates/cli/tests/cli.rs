use std::path::Path;
use std::process::{Command, Output};

fn isp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isp")).current_dir(dir).args(args).output().unwrap()
}

fn gen_small(dir: &Path) {
    let out = isp(
        dir,
        &["gen", "--n-id", "3", "--imgs-per-id", "3", "--h", "24", "--w", "12", "--out", "f.ispf", "--truth", "t.ispl"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_writes_features_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    assert!(dir.path().join("f.ispf").metadata().unwrap().len() > 0);
    assert!(dir.path().join("t.ispl").metadata().unwrap().len() > 0);
}

#[test]
fn cluster_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    for name in ["a.ispl", "b.ispl"] {
        assert_eq!(
            isp(dir.path(), &["cluster", "--in", "f.ispf", "--k", "6", "--seed", "7", "--out", name]).status.code(),
            Some(0)
        );
    }
    let a = std::fs::read(dir.path().join("a.ispl")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.ispl")).unwrap());
}

#[test]
fn eval_prints_key_values() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    isp(dir.path(), &["cluster", "--in", "f.ispf", "--out", "l.ispl"]);
    let out = isp(dir.path(), &["eval", "--pred", "l.ispl", "--truth", "t.ispl"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("iou.mean=")), "{text}");
    assert!(text.lines().all(|l| l.contains('=')));
}

#[test]
fn train_pool_match_chain() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let steps: [&[&str]; 4] = [
        &["cluster", "--in", "f.ispf", "--out", "l.ispl"],
        &[
            "train",
            "--in",
            "f.ispf",
            "--labels",
            "l.ispl",
            "--out",
            "w.ispw",
            "--total-epochs",
            "2",
            "--warmup-epochs",
            "1",
            "--lr-decay-epochs",
            "",
        ],
        &["pool", "--in", "f.ispf", "--weights", "w.ispw", "--out", "d.ispe"],
        &["match", "--query", "d.ispe", "--gallery", "d.ispe", "--out", "d.ispd", "--tsv", "d.tsv"],
    ];
    for args in steps {
        let out = isp(dir.path(), args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = isp(dir.path(), &["eval", "--dist", "d.ispd", "--query", "d.ispe", "--gallery", "d.ispe"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("map="));
}

#[test]
fn pipeline_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let out = isp(
        dir.path(),
        &[
            "pipeline",
            "--in",
            "f.ispf",
            "--truth",
            "t.ispl",
            "--out-dir",
            "run",
            "--total-epochs",
            "2",
            "--warmup-epochs",
            "1",
            "--lr-decay-epochs",
            "",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "labels.ispl",
        "classifier.ispw",
        "descriptors.ispe",
        "distances.ispd",
        "report.txt",
        "history.txt",
        "config.txt",
    ] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    assert_eq!(isp(dir.path(), &["cluster", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(isp(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(isp(dir.path(), &["cluster", "--in", "missing.ispf", "--out", "x"]).status.code(), Some(3));
    let out = isp(dir.path(), &["pipeline", "--in", "f.ispf", "--out-dir", "run", "--alpha=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = isp(dir.path(), &["pipeline", "--in", "f.ispf", "--out-dir", "run", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("junk.ispf"), b"not a feature file").unwrap();
    assert_eq!(isp(dir.path(), &["cluster", "--in", "junk.ispf", "--out", "x"]).status.code(), Some(2));
}
