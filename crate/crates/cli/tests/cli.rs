//! End-to-end pipeline runs against a small generated corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sbcnn_core::synth;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbcnn"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn sbcnn");
    assert!(
        out.status.success(),
        "command failed ({:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Writes a generated corpus to disk and ingests it, returning the
/// dataset path.
fn ingest_fixture(dir: &Path, seed: u64, n_train: usize, n_test: usize, k: usize) -> PathBuf {
    let corpus = synth::generate(seed, n_train, n_test, k);
    let paths = [
        ("train.txt", &corpus.raw_train),
        ("train.conllu", &corpus.conllu_train),
        ("test.txt", &corpus.raw_test),
        ("test.conllu", &corpus.conllu_test),
    ];
    for (name, content) in paths {
        std::fs::write(dir.join(name), content).unwrap();
    }
    let dataset = dir.join("dataset.json");
    run_ok(bin()
        .arg("ingest")
        .args(["--dialect", "semeval"])
        .arg("--train-raw")
        .arg(dir.join("train.txt"))
        .arg("--train-conllu")
        .arg(dir.join("train.conllu"))
        .arg("--test-raw")
        .arg(dir.join("test.txt"))
        .arg("--test-conllu")
        .arg(dir.join("test.conllu"))
        .arg("--out")
        .arg(&dataset));
    dataset
}

/// Smallest configuration that still exercises every layer.
const TINY: &[&str] = &[
    "--set", "d_w=6", "--set", "kernel_widths=2,3", "--set", "filters=4",
    "--set", "hidden_dim=8", "--set", "max_block_len=12", "--set", "max_entity_len=4",
    "--set", "dropout=0.0", "--set", "max_epochs=3", "--set", "batch_size=8",
];

fn single_run_dir(out_dir: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "expected exactly one run dir in {out_dir:?}");
    dirs.pop().unwrap()
}

#[test]
fn ingest_stats_blocks_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = ingest_fixture(tmp.path(), 3, 12, 5, 4);
    assert!(dataset.exists());
    assert!(tmp.path().join("dataset.json.manifest.json").exists());

    let stats = run_ok(bin().arg("stats").arg(&dataset));
    let json: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(json["train"]["count"], 12);
    assert_eq!(json["test"]["count"], 5);

    let blocks = run_ok(bin().arg("blocks").arg(&dataset).args(["--split", "train"]));
    let lines: Vec<&str> = std::str::from_utf8(&blocks.stdout)
        .unwrap()
        .lines()
        .collect();
    assert_eq!(lines.len(), 12);
    for line in &lines {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(row["variant"], "with_children");
        let indices = row["indices"].as_array().unwrap();
        assert!(!indices.is_empty());
        assert_eq!(indices.len(), row["forms"].as_array().unwrap().len());
        assert_eq!(indices.len(), row["roles"].as_array().unwrap().len());
        assert_eq!(indices.len(), row["pos"].as_array().unwrap().len());
    }
    let without = run_ok(bin()
        .arg("blocks")
        .arg(&dataset)
        .args(["--split", "train", "--without-children"]));
    for (w, wo) in std::str::from_utf8(&blocks.stdout)
        .unwrap()
        .lines()
        .zip(std::str::from_utf8(&without.stdout).unwrap().lines())
    {
        let a: serde_json::Value = serde_json::from_str(w).unwrap();
        let b: serde_json::Value = serde_json::from_str(wo).unwrap();
        assert!(b["indices"].as_array().unwrap().len() <= a["indices"].as_array().unwrap().len());
    }
}

#[test]
fn train_writes_run_artifacts_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = ingest_fixture(tmp.path(), 7, 10, 4, 3);

    let run = |out: &Path| {
        run_ok(bin()
            .arg("train")
            .arg(&dataset)
            .args(TINY)
            .args(["--seed", "11"])
            .arg("--out-dir")
            .arg(out));
        single_run_dir(out)
    };
    let dir_a = run(&tmp.path().join("runs-a"));
    let dir_b = run(&tmp.path().join("runs-b"));

    for artifact in ["manifest.json", "checkpoint.bin", "history.csv", "timing.csv"] {
        assert!(dir_a.join(artifact).exists(), "missing {artifact}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir_a.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["command"], "train");
    assert!(!manifest["inputs"].as_array().unwrap().is_empty());

    // identical seed, identical artifacts
    assert_eq!(
        std::fs::read(dir_a.join("history.csv")).unwrap(),
        std::fs::read(dir_b.join("history.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir_a.join("checkpoint.bin")).unwrap(),
        std::fs::read(dir_b.join("checkpoint.bin")).unwrap()
    );
}

#[test]
fn eval_single_and_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = ingest_fixture(tmp.path(), 13, 10, 6, 3);
    run_ok(bin()
        .arg("train")
        .arg(&dataset)
        .args(TINY)
        .args(["--seed", "5"])
        .arg("--out-dir")
        .arg(tmp.path().join("runs")));
    let ckpt = single_run_dir(&tmp.path().join("runs")).join("checkpoint.bin");

    let eval_dir = tmp.path().join("eval");
    let out = run_ok(bin()
        .arg("eval")
        .arg(&dataset)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out-dir")
        .arg(&eval_dir));
    assert!(String::from_utf8_lossy(&out.stdout).contains("macro-F1"));
    let run_dir = single_run_dir(&eval_dir);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("metrics.json")).unwrap())
            .unwrap();
    let single_f1 = metrics["macro_f1"].as_f64().unwrap();
    let csv = std::fs::read_to_string(run_dir.join("confusion.csv")).unwrap();
    assert!(csv.starts_with("gold\\pred,"));

    // an ensemble of the same checkpoint twice scores identically
    let ens_dir = tmp.path().join("eval-ens");
    run_ok(bin()
        .arg("eval")
        .arg(&dataset)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out-dir")
        .arg(&ens_dir));
    let ens: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(single_run_dir(&ens_dir).join("metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(ens["macro_f1"].as_f64().unwrap(), single_f1);

    // direction-insensitive scoring is at least as generous
    let dir_dir = tmp.path().join("eval-dir");
    run_ok(bin()
        .arg("eval")
        .arg(&dataset)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--ignore-direction")
        .arg("--out-dir")
        .arg(&dir_dir));
    let loose: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(single_run_dir(&dir_dir).join("metrics.json")).unwrap(),
    )
    .unwrap();
    assert!(loose["micro_accuracy"].as_f64().unwrap() >= metrics["micro_accuracy"].as_f64().unwrap());
}

#[test]
fn eval_against_wrong_corpus_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(tmp.path().join("a")).unwrap();
    let dataset = ingest_fixture(&tmp.path().join("a"), 17, 8, 3, 3);
    run_ok(bin()
        .arg("train")
        .arg(&dataset)
        .args(TINY)
        .args(["--seed", "2"])
        .arg("--out-dir")
        .arg(tmp.path().join("runs")));
    let ckpt = single_run_dir(&tmp.path().join("runs")).join("checkpoint.bin");

    let other_dir = tmp.path().join("b");
    std::fs::create_dir_all(&other_dir).unwrap();
    let other = ingest_fixture(&other_dir, 99, 8, 3, 3);
    let out = bin()
        .arg("eval")
        .arg(&other)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--out-dir")
        .arg(tmp.path().join("eval"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}

#[test]
fn usage_errors_exit_two() {
    let unknown_flag = bin().arg("train").arg("--no-such-flag").output().unwrap();
    assert_eq!(unknown_flag.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let dataset = ingest_fixture(tmp.path(), 23, 6, 2, 2);
    let bad_key = bin()
        .arg("train")
        .arg(&dataset)
        .args(["--set", "bogus_key=1"])
        .arg("--out-dir")
        .arg(tmp.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(bad_key.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_on_default_miniature_model() {
    let out = run_ok(bin().arg("gradcheck"));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("max relative gradient error"), "stdout: {text}");
}

#[test]
fn ablation_reports_both_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = ingest_fixture(tmp.path(), 29, 10, 4, 3);
    run_ok(bin()
        .arg("ablation")
        .arg(&dataset)
        .args(TINY)
        .args(["--seed", "4"])
        .arg("--out-dir")
        .arg(tmp.path().join("runs")));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(single_run_dir(&tmp.path().join("runs")).join("ablation.json"))
            .unwrap(),
    )
    .unwrap();
    let with = report["with_children"]["macro_f1"].as_f64().unwrap();
    let without = report["without_children"]["macro_f1"].as_f64().unwrap();
    let delta = report["macro_f1_delta"].as_f64().unwrap();
    assert!((with - without - delta).abs() < 1e-12);
}
