//! CLI behavior through the real binary: exit codes, machine-parseable
//! error classes, overrides, and artifact layout.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pixelstate"))
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    let text = format!(
        "[run]\nid = \"t\"\noutput_root = \"{}\"\n\n{extra}",
        dir.join("runs").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn collect_with_n_override_writes_exactly_n_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nn_samples = 999999\n");
    let out = bin()
        .args(["collect", "--n", "50"])
        .args(["--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let ds = pixelstate::dataset::Dataset::load(
        &dir.path().join("runs").join("t").join("dataset").join("dataset.bin"),
    )
    .unwrap();
    assert_eq!(ds.len(), 50);
    // effective config was persisted with the override applied
    let saved = std::fs::read_to_string(dir.path().join("runs").join("t").join("config.toml")).unwrap();
    assert!(saved.contains("n_samples = 50"), "{saved}");
}

#[test]
fn train_rl_predicted_without_checkpoint_fails_with_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bin()
        .args(["train-rl", "--obs", "predicted", "--timesteps", "100"])
        .args(["--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("error[missing_artifact]"),
        "stderr lacks machine-parseable class: {stderr}"
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[dataset]\nn_smaples = 100\n");
    let out = bin()
        .args(["collect", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[config]"), "{stderr}");
    assert!(stderr.contains("n_smaples"), "message should name the bad key: {stderr}");
}

#[test]
fn eval_without_artifacts_enumerates_missing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = bin()
        .args(["eval", "--obs", "all"])
        .args(["--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error[missing_artifact]"), "{stderr}");
    assert!(stderr.contains("predictor checkpoint"), "{stderr}");
    assert!(stderr.contains("full-state agent"), "{stderr}");
    assert!(stderr.contains("predicted-state agent"), "{stderr}");
}

#[test]
fn smoke_pipeline_and_csv_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[dataset]\nn_samples = 60\n\n[predictor]\nepochs = 2\n\n[rl]\ntotal_timesteps = 300\nwarmup_steps = 50\nbatch_size = 8\nbuffer_capacity = 500\n\n[eval]\nn_rollouts = 2\n",
    );
    let run = |args: &[&str]| {
        let out = bin().args(args).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&["collect"]);
    run(&["train-predictor"]);
    run(&["train-rl", "--obs", "full"]);
    run(&["eval", "--obs", "full"]);

    let root = dir.path().join("runs").join("t");
    let loss = std::fs::read_to_string(root.join("predictor").join("loss.csv")).unwrap();
    let mut lines = loss.lines();
    assert_eq!(lines.next().unwrap(), "epoch,train_loss,val_loss");
    assert_eq!(loss.lines().count(), 3, "{loss}");
    assert!(root.join("predictor").join("best.ckpt").exists());
    assert!(root.join("predictor").join("last.ckpt").exists());

    let episodes = std::fs::read_to_string(root.join("rl_full").join("episodes.csv")).unwrap();
    assert!(episodes.starts_with("episode,steps,shaped_return,raw_return,epsilon"));
    assert!(root.join("rl_full").join("agent.ckpt").exists());

    assert!(root.join("eval").join("metrics_mae.csv").exists());
    assert!(root.join("eval").join("report.txt").exists());
    assert!(root.join("eval").join("state_traces.svg").exists());
    // lock released after each command
    assert!(!root.join(".lock").exists());
}

#[test]
fn resume_continues_epoch_numbering_in_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[dataset]\nn_samples = 40\n\n[predictor]\nepochs = 2\n",
    );
    let run = |args: &[&str]| {
        let out = bin().args(args).args(["--config", cfg.to_str().unwrap()]).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["collect"]);
    run(&["train-predictor"]);
    run(&["train-predictor", "--epochs", "4", "--resume"]);

    let root = dir.path().join("runs").join("t");
    let loss = std::fs::read_to_string(root.join("predictor").join("loss.csv")).unwrap();
    let epochs: Vec<&str> =
        loss.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, vec!["0", "1", "2", "3"], "{loss}");
}

#[test]
fn version_flag_works() {
    let out = bin().arg("--version").output().unwrap();
    assert!(out.status.success());
}
