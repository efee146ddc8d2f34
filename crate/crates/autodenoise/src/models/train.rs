//! Train-to-convergence loop shared by the validation phase, the plain
//! control, and the weighting baselines: seeded shuffles, early stopping
//! on validation logloss, best-parameters restore.

use serde::{Deserialize, Serialize};

use crate::baselines::BatchWeighting;
use crate::data::{FeatureInstance, FieldSchema};
use crate::error::{Error, Result};
use crate::models::CtrModel;
use crate::nn::optim::{Optimizer, OptimizerConfig};
use crate::rng::{role, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEpochRecord {
    pub epoch: usize,
    /// Mean weighted train loss over the epoch's batches.
    pub train_loss: f64,
    pub val_logloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<TrainEpochRecord>,
    /// Index into `epochs` of the restored best model.
    pub best_epoch: usize,
    pub best_val_logloss: f64,
    /// Train positions that received weight zero during the final executed
    /// epoch; the baselines' "dropped" set for denoising quality.
    pub final_epoch_dropped: Vec<usize>,
}

/// Trains until validation logloss stops improving for `patience` epochs
/// (or `max_epochs`), then restores the best parameters. Fully seeded:
/// same model, data, config and seed give a bit-identical history.
pub fn train_to_convergence(
    model: &mut CtrModel,
    train_data: &[FeatureInstance],
    validation: &[FeatureInstance],
    schema: &FieldSchema,
    config: &TrainConfig,
    weighting: &BatchWeighting,
    seed: u64,
) -> Result<TrainHistory> {
    config.validate()?;
    weighting.validate()?;
    if train_data.is_empty() {
        return Err(Error::data("train_to_convergence on empty training data"));
    }
    if validation.is_empty() {
        return Err(Error::data("train_to_convergence needs a validation split"));
    }

    let mut opt = Optimizer::new(config.optimizer, model.param_len());
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_logloss: f64::INFINITY,
        final_epoch_dropped: Vec::new(),
    };
    let mut best_params: Option<CtrModel> = None;
    let mut bad_epochs = 0;
    let mut step: u64 = 0;

    for epoch in 0..config.max_epochs {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut stream(seed, &[role::TRAIN_SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut dropped_this_epoch = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<FeatureInstance> =
                chunk.iter().map(|&i| train_data[i].clone()).collect();
            let mut fwd_rng = stream(seed, &[role::MODEL_TRAIN_FWD, epoch as u64, b as u64]);
            let fwd = model.batch_forward(&batch, schema, Some(&mut fwd_rng))?;
            let mut drop_rng = stream(seed, &[role::BATCH_DROP, epoch as u64, b as u64]);
            let weights =
                weighting.weights(step, &fwd.losses, &fwd.labels, &fwd.probs, &mut drop_rng);
            for (inst, &w) in batch.iter().zip(&weights) {
                if w == 0.0 {
                    dropped_this_epoch.push(inst.global_position);
                }
            }
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                loss_sum += fwd
                    .losses
                    .iter()
                    .zip(&weights)
                    .map(|(l, w)| w * l)
                    .sum::<f64>()
                    / total;
                loss_count += 1;
            }
            model.apply_gradient(&fwd, &weights, &mut opt)?;
            step += 1;
        }

        let val_report = model.evaluate(validation, schema)?;
        let record = TrainEpochRecord {
            epoch,
            train_loss: if loss_count > 0 {
                loss_sum / loss_count as f64
            } else {
                0.0
            },
            val_logloss: val_report.logloss,
        };
        history.epochs.push(record);
        dropped_this_epoch.sort_unstable();
        dropped_this_epoch.dedup();
        history.final_epoch_dropped = dropped_this_epoch;

        if val_report.logloss < history.best_val_logloss {
            history.best_val_logloss = val_report.logloss;
            history.best_epoch = epoch;
            best_params = Some(model.clone());
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                break;
            }
        }
    }

    if let Some(best) = best_params {
        *model = best;
    }
    Ok(history)
}
