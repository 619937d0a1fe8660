use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use protodetect::io;

fn protodetect(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protodetect"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn protodetect")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = protodetect(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Default synthetic config, trained in density mode.
fn pipeline(dir: &Path) {
    ok(dir, &["synth", "--seed", "42", "--out-prefix", "data/"]);
    ok(
        dir,
        &[
            "train",
            "--embeddings",
            "data/train.pvec",
            "--labels",
            "data/train_labels.csv",
            "--out",
            "m.model",
        ],
    );
}

#[test]
fn synth_train_classify_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    ok(
        dir,
        &[
            "classify",
            "--model",
            "m.model",
            "--embeddings",
            "data/probes.pvec",
            "--out",
            "d.csv",
            "--trace",
            "t.csv",
        ],
    );
    let decisions = fs::read_to_string(dir.join("d.csv")).unwrap();
    let mut lines = decisions.lines();
    assert_eq!(lines.next(), Some("sample,verdict,class_name,score,threshold"));
    assert_eq!(lines.count(), 200);
    let trace = fs::read_to_string(dir.join("t.csv")).unwrap();
    assert!(trace.starts_with("sample,score,score_mean,threshold,verdict\n"));
    assert_eq!(trace.lines().count(), 201);
}

#[test]
fn missing_model_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = protodetect(tmp.path(), &["classify", "--embeddings", "x.pvec", "--out", "d.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--model"), "{err}");
    assert!(err.contains("Usage"), "{err}");
    assert!(!tmp.path().join("d.csv").exists());
}

#[test]
fn unknown_subcommand_and_bad_values_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(protodetect(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(protodetect(tmp.path(), &[]).status.code(), Some(1));
    let bad_mode = protodetect(
        tmp.path(),
        &["train", "--embeddings", "a", "--labels", "b", "--out", "c", "--mode", "fuzzy"],
    );
    assert_eq!(bad_mode.status.code(), Some(1));
    assert_eq!(protodetect(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let missing = protodetect(
        dir,
        &["classify", "--model", "nope.model", "--embeddings", "x.pvec", "--out", "d.csv"],
    );
    assert_eq!(missing.status.code(), Some(2));

    fs::write(dir.join("junk.pvec"), b"NOPE0000").unwrap();
    fs::write(dir.join("labels.csv"), "row,class_name\n").unwrap();
    let junk = protodetect(
        dir,
        &["train", "--embeddings", "junk.pvec", "--labels", "labels.csv", "--out", "m.model"],
    );
    assert_eq!(junk.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&junk.stderr).starts_with("error:"));
    assert!(!dir.join("m.model").exists());

    pipeline(dir);
    // class names must be new
    let dup = protodetect(
        dir,
        &[
            "add-class",
            "--model",
            "m.model",
            "--embeddings",
            "data/train.pvec",
            "--name",
            "class0",
            "--out",
            "m2.model",
        ],
    );
    assert_eq!(dup.status.code(), Some(2));
}

#[test]
fn eval_meets_acceptance_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let out = ok(
        dir,
        &[
            "eval",
            "--model",
            "m.model",
            "--embeddings",
            "data/probes.pvec",
            "--truth",
            "data/probes_truth.csv",
            "--report",
            "r.json",
        ],
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("clean accuracy"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("r.json")).unwrap()).unwrap();
    let accuracy = report["clean_accuracy"].as_f64().unwrap();
    let recall = report["detection_recall"].as_f64().unwrap();
    eprintln!("cli eval: accuracy {accuracy}, recall {recall}");
    assert!(accuracy >= 0.95);
    assert!(recall >= 0.95);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        pipeline(dir);
        ok(
            dir,
            &[
                "classify",
                "--model",
                "m.model",
                "--embeddings",
                "data/probes.pvec",
                "--out",
                "d.csv",
                "--trace",
                "t.csv",
            ],
        );
    }
    for file in [
        "data/train.pvec",
        "data/train_labels.csv",
        "data/probes.pvec",
        "data/probes_truth.csv",
        "m.model",
        "d.csv",
        "t.csv",
    ] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
}

#[test]
fn add_class_then_explain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    ok(
        dir,
        &[
            "synth",
            "--classes",
            "1",
            "--n",
            "50",
            "--outliers",
            "0",
            "--heldout",
            "0",
            "--seed",
            "7",
            "--out-prefix",
            "new_",
        ],
    );
    ok(
        dir,
        &[
            "add-class",
            "--model",
            "m.model",
            "--embeddings",
            "new_train.pvec",
            "--name",
            "fresh",
            "--out",
            "m2.model",
        ],
    );
    let before = io::load_model(dir.join("m.model")).unwrap();
    let after = io::load_model(dir.join("m2.model")).unwrap();
    assert_eq!(after.num_classes(), before.num_classes() + 1);
    assert_eq!(after.classes[..before.num_classes()], before.classes[..]);
    assert_eq!(after.classes.last().unwrap().class_name, "fresh");

    let out = ok(
        dir,
        &["explain", "--model", "m2.model", "--embeddings", "new_train.pvec", "--top", "2"],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 50);
    for line in text.lines() {
        assert!(line.starts_with("IF x ~ (class:"), "{line}");
        assert_eq!(line.matches(" OR ").count(), 1, "{line}");
    }

    let json = ok(
        dir,
        &["explain", "--model", "m2.model", "--embeddings", "new_train.pvec", "--json"],
    );
    let first: serde_json::Value =
        serde_json::from_str(String::from_utf8(json.stdout).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["terms"].as_array().unwrap().len(), 3);
    assert!(first["verdict"].is_string());
}

#[test]
fn bench_retrain_reports_json() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    pipeline(dir);
    let out = ok(
        dir,
        &[
            "bench-retrain",
            "--model",
            "m.model",
            "--embeddings",
            "data/probes.pvec",
            "--reps",
            "3",
            "--watts",
            "300",
        ],
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(stdout.lines().last().unwrap()).unwrap();
    let wall = report["wall_seconds"].as_f64().unwrap();
    let energy = report["energy_estimate_wh"].as_f64().unwrap();
    assert!(wall > 0.0);
    assert!((energy - wall * 300.0 / 3600.0).abs() <= 1e-12);
    assert_eq!(report["samples"], 200);

    let few = protodetect(
        dir,
        &["bench-retrain", "--model", "m.model", "--embeddings", "data/probes.pvec", "--reps", "2"],
    );
    assert_eq!(few.status.code(), Some(2));
}
