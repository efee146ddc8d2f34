//! The full two-phase denoising pipeline on a noisy synthetic dataset:
//! warm-up fills the loss matrix, then alternating searching and
//! validation phases; the best epoch's subset, policy, and model are
//! written alongside the JSON report.
//!
//! ```bash
//! cargo run --release --example denoise_run
//! ```

use autodenoise::config::{Method, NoiseConfig, RunConfig, SynthSpec};
use autodenoise::models::ModelKind;
use autodenoise::runner::cmd_run;

fn main() -> autodenoise::Result<()> {
    let mut config = RunConfig {
        seed: 1,
        ..RunConfig::default()
    };
    config.data.synth = Some(SynthSpec {
        users: 300,
        items: 150,
        interactions: 15_000,
        teacher_rank: 8,
        seed: Some(100),
    });
    config.noise = Some(NoiseConfig {
        flip_rate: 0.2,
        seed: Some(101),
    });
    config.model.kind = ModelKind::DeepFmLite;
    config.denoise.method = Method::Autodenoise;
    config.denoise.epsilon = 0.9;
    config.denoise.warmup_epochs = 4;
    config.denoise.epochs = 8;

    let out_dir = std::env::temp_dir().join("autodenoise-example-run");
    let (report, artifacts) = cmd_run(&config, &out_dir)?;

    for r in &report.records {
        println!(
            "epoch {:>2}: val auc {:.4} | test auc {:.4} | subset {}",
            r.epoch, r.val_auc, r.test_auc, r.subset_size
        );
    }
    println!(
        "best epoch {} with val auc {:.4}, test auc {:.4}",
        report.best.epoch, report.best.val_auc, report.best.test_auc
    );
    if let Some(q) = &report.denoise_quality {
        println!(
            "dropped {} instances, {} of them flipped (precision {:?}, recall {:?})",
            q.dropped, q.overlap, q.precision, q.recall
        );
    }
    println!("artifacts under {}", out_dir.display());
    println!("  report: {}", artifacts.report.display());
    if let Some(subset) = &artifacts.subset {
        println!("  subset: {}", subset.display());
    }
    println!("  model:  {}", artifacts.model_checkpoint.display());
    if let Some(policy) = &artifacts.policy_checkpoint {
        println!("  policy: {}", policy.display());
    }
    Ok(())
}
