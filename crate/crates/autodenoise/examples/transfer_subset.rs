//! Transferability: denoise with an FM backbone, export the selected
//! subset, then train DeepFM-lite from scratch on that subset and compare
//! against a same-seed full-data control.
//!
//! ```bash
//! cargo run --release --example transfer_subset
//! ```

use autodenoise::config::{Method, NoiseConfig, RunConfig, SynthSpec};
use autodenoise::models::ModelKind;
use autodenoise::runner::{cmd_run, cmd_transfer};

fn main() -> autodenoise::Result<()> {
    let mut config = RunConfig {
        seed: 2,
        ..RunConfig::default()
    };
    config.data.synth = Some(SynthSpec {
        users: 300,
        items: 150,
        interactions: 15_000,
        teacher_rank: 8,
        seed: Some(300),
    });
    config.noise = Some(NoiseConfig {
        flip_rate: 0.2,
        seed: Some(301),
    });
    config.model.kind = ModelKind::Fm;
    config.denoise.method = Method::Autodenoise;
    config.denoise.epsilon = 0.9;
    config.denoise.warmup_epochs = 3;
    config.denoise.epochs = 5;

    let run_dir = std::env::temp_dir().join("autodenoise-example-transfer-run");
    let (report, artifacts) = cmd_run(&config, &run_dir)?;
    let subset = artifacts.subset.expect("denoising run exports a subset");
    println!(
        "FM run: best epoch {}, subset of {} instances exported",
        report.best.epoch, report.best.subset_size
    );

    // Same dataset and seeds, different backbone.
    let mut transfer_config = config.clone();
    transfer_config.model.kind = ModelKind::DeepFmLite;
    let transfer_dir = std::env::temp_dir().join("autodenoise-example-transfer-out");
    let transfer = cmd_transfer(
        &transfer_config,
        &subset,
        ModelKind::DeepFmLite,
        &transfer_dir,
    )?;
    println!(
        "deepfm on subset:    test auc {:.4} logloss {:.4}",
        transfer.transfer_test_auc, transfer.transfer_test_logloss
    );
    println!(
        "deepfm on full data: test auc {:.4} logloss {:.4}",
        transfer.control_test_auc, transfer.control_test_logloss
    );
    Ok(())
}
