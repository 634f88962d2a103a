//! Drives the `cta` binary end to end on a miniature configuration:
//! training, the three experiment subcommands, inspection, dataset
//! validation, and the error paths a user will actually hit.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cta::shiftgen::{export_dataset, generate_domain, source_domain};

fn cta(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cta"));
    cmd.args(args).env_remove("CTA_OUTPUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A config small enough to train and adapt in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let text = serde_json::json!({
        "source_training": {
            "per_class": 6,
            "val_fraction": 0.2,
            "epochs": 2,
            "batch_size": 4,
            "learning_rate": 0.05,
            "momentum": 0.9
        },
        "protocol": {
            "target_domains": ["ctx01_dim", "ctx02_bright"],
            "batch_size": 8,
            "epochs": 2,
            "batch_sizes": [2, 4, 8],
            "seeds": 1,
            "per_class": 4
        },
        "master_seed": 7
    })
    .to_string();
    let path = dir.join("tiny.json");
    std::fs::write(&path, text).unwrap();
    path
}

/// The single run directory under `root` whose name ends in `-{subcommand}`.
fn run_dir(root: &Path, subcommand: &str) -> PathBuf {
    let mut matches: Vec<PathBuf> = std::fs::read_dir(root)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(&format!("-{subcommand}")))
        })
        .collect();
    matches.sort();
    matches.pop().unwrap_or_else(|| panic!("no {subcommand} run directory under {}", root.display()))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|_| panic!("missing {}", path.display()))
}

#[test]
fn full_cli_flow_on_a_tiny_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("runs");
    let out_str = out_dir.to_str().unwrap();
    let config = tiny_config(tmp.path());
    let config_str = config.to_str().unwrap();

    // Adaptation before training fails with a pointer at the fix.
    let premature = cta(&["adapt-short", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(!premature.status.success());
    let msg = stderr_of(&premature);
    assert!(msg.contains("checkpoint not found"), "unexpected stderr: {msg}");
    assert!(msg.contains("train-source"), "unexpected stderr: {msg}");

    let trained = cta(&["train-source", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(trained.status.success(), "train-source failed: {}", stderr_of(&trained));
    let train_run = run_dir(&out_dir, "train-source");
    assert!(train_run.join("model.ctab").is_file());
    assert!(read(&train_run.join("train_history.csv")).starts_with("run_id,epoch,train_loss,val_accuracy"));
    let frozen = read(&train_run.join("config.json"));
    assert!(frozen.contains("\"master_seed\": 7"));

    let short = cta(&["adapt-short", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(short.status.success(), "adapt-short failed: {}", stderr_of(&short));
    let short_run = run_dir(&out_dir, "adapt-short");
    let results = read(&short_run.join("results.csv"));
    for method in ["source", "bn", "tent", "cotta"] {
        assert!(results.contains(&format!(",{method},")), "results.csv lacks {method}:\n{results}");
    }
    assert!(short_run.join("telemetry.csv").is_file());
    assert!(short_run.join("aggregate.csv").is_file());

    // Re-running the identical config reproduces the CSV byte for byte in
    // a fresh run directory.
    let again = cta(&["adapt-short", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(again.status.success());
    let second_run = run_dir(&out_dir, "adapt-short");
    assert_ne!(short_run, second_run, "re-run should create a new directory");
    assert_eq!(results, read(&second_run.join("results.csv")));

    let long = cta(&["adapt-long", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(long.status.success(), "adapt-long failed: {}", stderr_of(&long));
    let long_run = run_dir(&out_dir, "adapt-long");
    assert!(read(&long_run.join("long_accuracy.svg")).starts_with("<svg"));
    assert!(long_run.join("long_forgetting.svg").is_file());

    let sweep = cta(&["sweep", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(sweep.status.success(), "sweep failed: {}", stderr_of(&sweep));
    let sweep_run = run_dir(&out_dir, "sweep");
    let sweep_csv = read(&sweep_run.join("sweep.csv"));
    assert!(sweep_csv.contains("source_val"), "sweep.csv lacks the source_val rows:\n{sweep_csv}");
    assert!(sweep_run.join("sweep_gain.svg").is_file());

    let inspect = cta(&["inspect", "--config", config_str, "--output-dir", out_str], &[]);
    assert!(inspect.status.success(), "inspect failed: {}", stderr_of(&inspect));
    let inspect_run = run_dir(&out_dir, "inspect");
    assert!(inspect_run.join("inspect.svg").is_file());
    assert!(read(&inspect_run.join("confidence.csv")).lines().count() > 1);
}

#[test]
fn output_dir_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("env-runs");
    let config = tiny_config(tmp.path());
    let out = cta(
        &["train-source", "--config", config.to_str().unwrap()],
        &[("CTA_OUTPUT_DIR", out_dir.to_str().unwrap())],
    );
    assert!(out.status.success(), "train-source failed: {}", stderr_of(&out));
    assert!(run_dir(&out_dir, "train-source").join("model.ctab").is_file());
}

#[test]
fn invalid_configs_report_every_violation_at_once() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("broken.json");
    std::fs::write(
        &path,
        r#"{"adapter": {"restore_prob": 2.0}, "protocol": {"batch_size": 1}, "mystery": true}"#,
    )
    .unwrap();
    let out = cta(&["adapt-short", "--config", path.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let msg = stderr_of(&out);
    for needle in ["adapter.restore_prob", "protocol.batch_size", "mystery"] {
        assert!(msg.contains(needle), "stderr lacks `{needle}`:\n{msg}");
    }
}

#[test]
fn pinned_protocol_kind_must_match_the_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("long.json");
    std::fs::write(&path, r#"{"protocol": {"kind": "long"}}"#).unwrap();
    let out = cta(
        &["adapt-short", "--config", path.to_str().unwrap(), "--output-dir", tmp.path().to_str().unwrap()],
        &[],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("protocol.kind"), "stderr: {}", stderr_of(&out));
}

#[test]
fn ingest_check_validates_an_exported_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let data_root = tmp.path().join("dataset");
    let ds = generate_domain(&source_domain(3), 2).unwrap();
    export_dataset(&ds, &data_root).unwrap();

    let out = cta(
        &[
            "ingest-check",
            data_root.to_str().unwrap(),
            "--output-dir",
            tmp.path().join("runs").to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "ingest-check failed: {}", stderr_of(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("source"), "stdout: {stdout}");
    assert!(stdout.contains("ingestible"), "stdout: {stdout}");

    // A class directory emptied after export must be flagged.
    let broken = tmp.path().join("dataset/source/00_circle");
    for f in std::fs::read_dir(&broken).unwrap() {
        std::fs::remove_file(f.unwrap().path()).unwrap();
    }
    let out = cta(
        &[
            "ingest-check",
            data_root.to_str().unwrap(),
            "--output-dir",
            tmp.path().join("runs").to_str().unwrap(),
        ],
        &[],
    );
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("no image files"), "stderr: {}", stderr_of(&out));
}
