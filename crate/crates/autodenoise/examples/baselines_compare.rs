//! Compare the denoising baselines on one noisy synthetic dataset: plain
//! training, truncated CE (drop the largest losses), reweighted CE, and a
//! random-drop control. Prints test metrics and, where a method actually
//! drops instances, the precision of its drops against the ground-truth
//! noise mask.
//!
//! ```bash
//! cargo run --release --example baselines_compare
//! ```

use autodenoise::config::{Method, NoiseConfig, RunConfig, SynthSpec};
use autodenoise::models::ModelKind;
use autodenoise::runner::cmd_run;

fn main() -> autodenoise::Result<()> {
    let base = {
        let mut config = RunConfig {
            seed: 5,
            ..RunConfig::default()
        };
        config.data.synth = Some(SynthSpec {
            users: 300,
            items: 150,
            interactions: 15_000,
            teacher_rank: 8,
            seed: Some(200),
        });
        config.noise = Some(NoiseConfig {
            flip_rate: 0.2,
            seed: Some(201),
        });
        config.model.kind = ModelKind::DeepFmLite;
        config.baseline.tce_max_drop_rate = 0.2;
        config.baseline.tce_anneal_steps = 100;
        config.baseline.rce_gamma = 1.0;
        config.baseline.random_drop_rate = 0.2;
        config
    };

    println!(
        "{:<10} {:>9} {:>9} {:>10} {:>8}",
        "method", "test auc", "logloss", "precision", "kept"
    );
    for method in [Method::None, Method::Tce, Method::Rce, Method::Random] {
        let mut config = base.clone();
        config.denoise.method = method;
        let out_dir = std::env::temp_dir().join(format!("autodenoise-example-baseline-{method}"));
        let (report, _) = cmd_run(&config, &out_dir)?;
        let q = report.denoise_quality.as_ref();
        let precision = q
            .and_then(|q| q.precision)
            .map_or("-".to_string(), |p| format!("{p:.4}"));
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>10} {:>8}",
            method.to_string(),
            report.best.test_auc,
            report.best.test_logloss,
            precision,
            report.best.subset_size
        );
    }
    Ok(())
}
