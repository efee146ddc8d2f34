//! End-to-end checks of the `autodenoise` binary: the synth -> noise ->
//! run -> eval -> transfer flow, exit codes, and diagnostics.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autodenoise"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    let status = bin()
        .args([
            "synth",
            "--users",
            "30",
            "--items",
            "20",
            "--interactions",
            "420",
            "--rank",
            "4",
            "--seed",
            "5",
            "--out-dir",
        ])
        .arg(&synth_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(synth_dir.join("dataset.csv").exists());
    assert!(synth_dir.join("schema.json").exists());

    let bundle = dir.path().join("bundle");
    let status = bin()
        .args([
            "noise",
            "--rate",
            "0.2",
            "--seed",
            "6",
            "--split-seed",
            "7",
            "--data",
        ])
        .arg(synth_dir.join("dataset.csv"))
        .arg("--out-dir")
        .arg(&bundle)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(bundle.join("train.csv").exists());
    assert!(bundle.join("mask.json").exists());

    let config = write_config(
        dir.path(),
        &format!(
            r#"
seed = 9
[data]
path = "{}"
[model]
kind = "fm"
embedding_dim = 8
[train]
batch_size = 64
max_epochs = 4
patience = 2
[denoise]
method = "autodenoise"
epsilon = 0.9
warmup_epochs = 2
epochs = 2
"#,
            bundle.display()
        ),
    );

    let run_dir = dir.path().join("run");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("best epoch"), "{stdout}");
    assert!(run_dir.join("report.json").exists());
    assert!(run_dir.join("subset.txt").exists());
    assert!(run_dir.join("model.ckpt.json").exists());
    assert!(run_dir.join("policy.ckpt.json").exists());

    // Eval reproduces the reported test metrics from the checkpoint.
    let output = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(run_dir.join("model.ckpt.json"))
        .args(["--split", "test"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let eval: serde_json::Value = serde_json::from_slice(&output.stdout).expect("eval prints JSON");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(eval["auc"], report["best"]["test_auc"]);
    assert_eq!(eval["logloss"], report["best"]["test_logloss"]);

    // Transfer the subset to the other backbone.
    let transfer_config = write_config(
        &dir.path().join("."),
        &format!(
            r#"
seed = 9
[data]
path = "{}"
[model]
kind = "deepfm"
embedding_dim = 8
hidden_dims = [8, 8]
[train]
batch_size = 64
max_epochs = 4
patience = 2
"#,
            bundle.display()
        ),
    );
    let transfer_dir = dir.path().join("transfer");
    let output = bin()
        .args(["transfer", "--config"])
        .arg(&transfer_config)
        .arg("--subset")
        .arg(run_dir.join("subset.txt"))
        .arg("--out-dir")
        .arg(&transfer_dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(transfer_dir.join("transfer_report.json").exists());
}

#[test]
fn method_none_gives_single_record_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let synth_dir = dir.path().join("synth");
    assert!(bin()
        .args([
            "synth",
            "--users",
            "25",
            "--items",
            "16",
            "--interactions",
            "360",
            "--rank",
            "4",
            "--seed",
            "3",
            "--out-dir",
        ])
        .arg(&synth_dir)
        .status()
        .unwrap()
        .success());

    let run_dir = dir.path().join("run");
    let status = bin()
        .args(["run", "--data"])
        .arg(synth_dir.join("dataset.csv"))
        .args([
            "--seed",
            "4",
            "--method",
            "none",
            "--model",
            "fm",
            "--batch-size",
            "64",
            "--noise-rate",
            "0.2",
            "--out-dir",
        ])
        .arg(&run_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["method"], "none");
    assert_eq!(report["records"].as_array().unwrap().len(), 1);
    assert_eq!(report["config"]["seed"], 4);
    assert_eq!(report["config"]["train"]["batch_size"], 64);
}

#[test]
fn config_validation_failure_names_the_key_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let output = bin()
        .args(["run", "--method", "bogus", "--out-dir"])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("method"), "{stderr}");

    let config = write_config(
        dir.path(),
        r#"
seed = 1
[data]
synth = { users = 10, items = 8, interactions = 60 }
[denoise]
epsilon = 1.5
"#,
    );
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("epsilon"), "{stderr}");
}

#[test]
fn missing_subset_and_corrupt_checkpoint_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"
seed = 1
[data]
synth = { users = 25, items = 16, interactions = 360, seed = 3 }
[model]
kind = "fm"
embedding_dim = 8
[train]
batch_size = 64
max_epochs = 2
"#,
    );
    let output = bin()
        .args(["transfer", "--config"])
        .arg(&config)
        .arg("--subset")
        .arg(dir.path().join("missing.txt"))
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());

    let bad_ckpt = dir.path().join("bad.ckpt.json");
    std::fs::write(&bad_ckpt, "{").unwrap();
    let output = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&bad_ckpt)
        .output()
        .unwrap();
    assert!(!output.status.success());
}
