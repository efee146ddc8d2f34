//! Train the two CTR backbones (second-order FM and DeepFM-lite) to
//! convergence on a synthetic dataset and report AUC/logloss.
//!
//! ```bash
//! cargo run --release --example train_ctr_model
//! ```

use autodenoise::baselines::BatchWeighting;
use autodenoise::data::{split_dataset, synth_generate};
use autodenoise::models::train::{train_to_convergence, TrainConfig};
use autodenoise::models::{CtrModel, ModelKind, ModelSpec};
use autodenoise::nn::OptimizerConfig;

fn main() -> autodenoise::Result<()> {
    let out = synth_generate(300, 150, 15_000, 8, 11)?;
    let schema = out.schema;
    let split = split_dataset(out.instances, (0.8, 0.1, 0.1), 12, 256)?;

    let config = TrainConfig {
        max_epochs: 20,
        patience: 3,
        batch_size: 256,
        optimizer: OptimizerConfig::adam(1e-3),
    };

    for kind in [ModelKind::Fm, ModelKind::DeepFmLite] {
        let spec = ModelSpec::new(kind, &schema, 16);
        let mut model = CtrModel::init(&spec, 13);
        let history = train_to_convergence(
            &mut model,
            &split.train,
            &split.validation,
            &schema,
            &config,
            &BatchWeighting::None,
            14,
        )?;
        let val = model.evaluate(&split.validation, &schema)?;
        let test = model.evaluate(&split.test, &schema)?;
        println!(
            "{kind}: {} epochs (best {}), val auc {:.4} logloss {:.4}, test auc {:.4} logloss {:.4}",
            history.epochs.len(),
            history.best_epoch + 1,
            val.auc.unwrap(),
            val.logloss,
            test.auc.unwrap(),
            test.logloss
        );
    }
    Ok(())
}
