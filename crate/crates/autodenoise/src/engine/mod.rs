//! Two-phase denoising orchestration: warm-up training fills the loss
//! matrix, then each overall epoch runs a searching phase (REINFORCE on
//! the loss-improvement reward) followed by a validation phase (top-k
//! subset selection and a fresh model trained to convergence). The best
//! epoch by validation AUC supplies the saved subset and policy.

pub mod loss_matrix;
pub mod subset;

pub use loss_matrix::{compute_reward, LossMatrix, LossVector};
pub use subset::{export_subset, import_subset, SubsetFile};

use serde::{Deserialize, Serialize};

use crate::baselines::BatchWeighting;
use crate::data::{DatasetSplit, FeatureInstance, FieldSchema};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::models::train::{train_to_convergence, TrainConfig, TrainHistory};
use crate::models::{CtrModel, ModelSpec};
use crate::nn::mlp::ForwardMode;
use crate::nn::optim::{Optimizer, OptimizerConfig};
use crate::policy::{sample_actions, topk_select, PolicyParams, PolicySpec};
use crate::rng::{role, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Keep the ceil(epsilon * M) highest select probabilities per batch.
    TopK,
    /// Sample per-instance Bernoulli actions (the "-v" ablation).
    Individual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Each sampled selection is rewarded with the mean per-instance
    /// reward over the instances it selected; the reward depends on the
    /// sampled actions, which is what gives the policy gradient its
    /// denoising direction.
    Shared,
    /// Each instance's log-prob is weighted by its own reward. The reward
    /// then ignores the sampled action and the expected gradient is zero;
    /// kept as an ablation of the shared form.
    Individual,
}

/// Everything the overall loop needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub model_spec: ModelSpec,
    pub policy_spec: PolicySpec,
    pub model_optimizer: OptimizerConfig,
    pub policy_optimizer: OptimizerConfig,
    /// Validation-phase convergence training.
    pub train: TrainConfig,
    /// Selection ratio per batch in the validation phase.
    pub epsilon: f64,
    /// Warm-up epochs C (= stored loss-matrix rows).
    pub warmup_epochs: usize,
    /// Overall training epochs T.
    pub epochs: usize,
    pub selection_mode: SelectionMode,
    pub reward_mode: RewardMode,
    /// Monte-Carlo action samples per REINFORCE estimate.
    pub mc_samples: usize,
    pub master_seed: u64,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::config("epsilon must be in (0, 1]"));
        }
        if self.warmup_epochs == 0 {
            return Err(Error::config("warmup_epochs must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.mc_samples == 0 {
            return Err(Error::config("mc_samples must be >= 1"));
        }
        self.model_optimizer.validate()?;
        self.policy_optimizer.validate()?;
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based overall epoch t.
    pub epoch: usize,
    pub val_auc: f64,
    pub val_logloss: f64,
    pub test_auc: f64,
    pub test_logloss: f64,
    pub subset_size: usize,
}

/// Outcome of the overall loop: per-epoch records plus the best epoch's
/// policy, subset, and trained model.
#[derive(Debug, Clone)]
pub struct DenoiseRun {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Best validation AUC over recorded epochs.
    pub best_metric: f64,
    pub best_policy: PolicyParams,
    pub best_subset: Vec<usize>,
    pub best_model: CtrModel,
}

/// One plain training epoch over the fixed batch plan: record every
/// instance's pre-update loss (forward-only, eval mode, so the recorded
/// value is a pure function of the model state), then update on the full
/// batch. Both the warm-up and the warm-up-equivalence checks run through
/// here.
pub fn run_plain_epoch(
    model: &mut CtrModel,
    opt: &mut Optimizer,
    split: &DatasetSplit,
    schema: &FieldSchema,
    epoch_seed: u64,
) -> Result<LossVector> {
    let mut slots: Vec<Option<f64>> = vec![None; split.train.len()];
    for (b, batch) in split.batches().enumerate() {
        let record = model.batch_forward(batch, schema, None)?;
        for (inst, &loss) in batch.iter().zip(&record.losses) {
            slots[inst.global_position] = Some(loss);
        }
        let mut fwd_rng = stream(epoch_seed, &[role::MODEL_TRAIN_FWD, b as u64]);
        let fwd = model.batch_forward(batch, schema, Some(&mut fwd_rng))?;
        let weights = vec![1.0; batch.len()];
        model.apply_gradient(&fwd, &weights, opt)?;
    }
    LossVector::from_slots(slots)
}

/// C plain epochs, each from a freshly reinitialized model, recording
/// per-instance pre-update losses into the matrix rows in order.
pub fn warmup_train(
    split: &DatasetSplit,
    schema: &FieldSchema,
    model_spec: &ModelSpec,
    model_optimizer: OptimizerConfig,
    warmup_epochs: usize,
    seed: u64,
) -> Result<LossMatrix> {
    let mut lmat = LossMatrix::new(warmup_epochs, split.train.len())?;
    for c in 0..warmup_epochs {
        let epoch_seed = crate::rng::derive_seed(seed, &[role::WARMUP_EPOCH, c as u64]);
        let mut model = CtrModel::init(
            model_spec,
            crate::rng::derive_seed(epoch_seed, &[role::MODEL_REINIT]),
        );
        let mut opt = Optimizer::new(model_optimizer, model.param_len());
        let losses = run_plain_epoch(&mut model, &mut opt, split, schema, epoch_seed)?;
        lmat.write_row(c, &losses)?;
    }
    Ok(lmat)
}

pub struct SearchEpochOutcome {
    pub losses: LossVector,
    /// Model state at the end of the epoch (diagnostics/tests).
    pub final_model: CtrModel,
}

/// One searching-phase epoch. Every batch is used twice: first to sample
/// actions, compute per-instance rewards against the loss matrix, and
/// update the policy; then, with the updated policy, to sample the
/// selection that drives the model update while recording every
/// instance's loss for the returned vector.
#[allow(clippy::too_many_arguments)]
pub fn search_epoch(
    policy: &mut PolicyParams,
    policy_opt: &mut Optimizer,
    split: &DatasetSplit,
    schema: &FieldSchema,
    model_spec: &ModelSpec,
    model_optimizer: OptimizerConfig,
    lmat: &LossMatrix,
    reward_mode: RewardMode,
    mc_samples: usize,
    epoch_seed: u64,
) -> Result<SearchEpochOutcome> {
    if !lmat.is_filled() {
        return Err(Error::state("search epoch requires a filled loss matrix"));
    }
    let mut model = CtrModel::init(
        model_spec,
        crate::rng::derive_seed(epoch_seed, &[role::MODEL_REINIT]),
    );
    let mut model_opt = Optimizer::new(model_optimizer, model.param_len());
    let mut slots: Vec<Option<f64>> = vec![None; split.train.len()];

    for (b, batch) in split.batches().enumerate() {
        // Per-instance current losses: one forward-only eval pass serves
        // both the reward and the recorded loss vector (the model is not
        // updated between the two uses).
        let record = model.batch_forward(batch, schema, None)?;
        for (inst, &loss) in batch.iter().zip(&record.losses) {
            slots[inst.global_position] = Some(loss);
        }

        // Policy step: sample a1, reward it by the loss improvement over
        // the stored averages, ascend the surrogate.
        let mut p1_rng = stream(epoch_seed, &[role::POLICY_A1, b as u64]);
        let (probs1, tape1) = policy.forward(batch, schema, ForwardMode::Train(&mut p1_rng))?;
        let samples: Vec<_> = (0..mc_samples)
            .map(|_| sample_actions(&probs1, &mut p1_rng))
            .collect::<Result<_>>()?;
        let instance_rewards: Vec<f64> = batch
            .iter()
            .zip(&record.losses)
            .map(|(inst, &loss)| compute_reward(lmat, loss, inst.global_position))
            .collect::<Result<_>>()?;
        let rewards_per_sample: Vec<Vec<f64>> = samples
            .iter()
            .map(|sample| match reward_mode {
                RewardMode::Individual => instance_rewards.clone(),
                RewardMode::Shared => {
                    let mask = sample.selection_mask();
                    let count = mask.iter().filter(|&&s| s).count();
                    let shared = if count == 0 {
                        0.0
                    } else {
                        instance_rewards
                            .iter()
                            .zip(&mask)
                            .filter(|(_, &s)| s)
                            .map(|(r, _)| r)
                            .sum::<f64>()
                            / count as f64
                    };
                    vec![shared; batch.len()]
                }
            })
            .collect();
        crate::policy::reinforce_update(
            policy,
            &tape1,
            &probs1,
            &samples,
            &rewards_per_sample,
            policy_opt,
        )?;

        // Model step: sample a2 from the updated policy and update on the
        // selected instances (skip when empty).
        let mut p2_rng = stream(epoch_seed, &[role::POLICY_A2, b as u64]);
        let (probs2, _) = policy.forward(batch, schema, ForwardMode::Train(&mut p2_rng))?;
        let a2 = sample_actions(&probs2, &mut p2_rng)?;

        let mut fwd_rng = stream(epoch_seed, &[role::MODEL_TRAIN_FWD, b as u64]);
        let fwd = model.batch_forward(batch, schema, Some(&mut fwd_rng))?;
        let weights: Vec<f64> = a2
            .selection_mask()
            .into_iter()
            .map(|s| if s { 1.0 } else { 0.0 })
            .collect();
        model.apply_gradient(&fwd, &weights, &mut model_opt)?;
    }

    Ok(SearchEpochOutcome {
        losses: LossVector::from_slots(slots)?,
        final_model: model,
    })
}

#[derive(Debug, Clone)]
pub struct ValidationOutcome {
    /// Selected train positions, ascending.
    pub subset: Vec<usize>,
    pub model: CtrModel,
    pub history: TrainHistory,
    pub validation: EvalReport,
    pub test: EvalReport,
}

/// Validation phase: score the whole training set with the frozen policy
/// (eval mode), keep the top ceil(epsilon * batch) per batch (or sample
/// individually in the ablation mode), then train a freshly initialized
/// model to convergence on the selection.
#[allow(clippy::too_many_arguments)]
pub fn validation_run(
    policy: &mut PolicyParams,
    split: &DatasetSplit,
    schema: &FieldSchema,
    model_spec: &ModelSpec,
    train_config: &TrainConfig,
    epsilon: f64,
    selection_mode: SelectionMode,
    seed: u64,
) -> Result<ValidationOutcome> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::config("epsilon must be in (0, 1]"));
    }
    let mut subset = Vec::new();
    for (b, batch) in split.batches().enumerate() {
        let p_select = policy.select_probabilities(batch, schema)?;
        let mask = match selection_mode {
            SelectionMode::TopK => {
                let k = (epsilon * batch.len() as f64).ceil() as usize;
                topk_select(&p_select, k.clamp(1, batch.len()))?
            }
            SelectionMode::Individual => {
                let (probs, _) = policy.forward(batch, schema, ForwardMode::Eval)?;
                let mut rng = stream(seed, &[role::VAL_SELECT, b as u64]);
                sample_actions(&probs, &mut rng)?.selection_mask()
            }
        };
        for (inst, selected) in batch.iter().zip(mask) {
            if selected {
                subset.push(inst.global_position);
            }
        }
    }
    subset.sort_unstable();
    subset.dedup();
    if subset.is_empty() {
        return Err(Error::state("validation selection kept no instances"));
    }

    let selected: Vec<FeatureInstance> = subset.iter().map(|&p| split.train[p].clone()).collect();
    let mut model = CtrModel::init(
        model_spec,
        crate::rng::derive_seed(seed, &[role::MODEL_REINIT]),
    );
    let history = train_to_convergence(
        &mut model,
        &selected,
        &split.validation,
        schema,
        train_config,
        &BatchWeighting::None,
        crate::rng::derive_seed(seed, &[role::VAL_TRAIN]),
    )?;
    let validation = model.evaluate(&split.validation, schema)?;
    let test = model.evaluate(&split.test, schema)?;
    Ok(ValidationOutcome {
        subset,
        model,
        history,
        validation,
        test,
    })
}

fn require_auc(report: &EvalReport, split_name: &str) -> Result<f64> {
    report.auc.ok_or_else(|| {
        Error::data(format!(
            "{split_name} split is single-class; AUC-based epoch selection is undefined"
        ))
    })
}

/// The overall loop: warm-up fills the loss matrix, then T alternating
/// search/validation epochs, keeping the subset and policy of the epoch
/// with the best validation AUC (ties broken by lower validation logloss).
pub fn overall_loop(
    split: &DatasetSplit,
    schema: &FieldSchema,
    config: &EngineConfig,
) -> Result<DenoiseRun> {
    config.validate()?;
    let master = config.master_seed;
    let mut lmat = warmup_train(
        split,
        schema,
        &config.model_spec,
        config.model_optimizer,
        config.warmup_epochs,
        master,
    )?;

    let mut policy = PolicyParams::init(
        &config.policy_spec,
        crate::rng::derive_seed(master, &[role::POLICY_INIT]),
    );
    let mut policy_opt = Optimizer::new(config.policy_optimizer, policy.param_len());

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, f64, PolicyParams, Vec<usize>, CtrModel)> = None;

    for t in 1..=config.epochs {
        let search_seed = crate::rng::derive_seed(master, &[role::SEARCH_EPOCH, t as u64]);
        let outcome = search_epoch(
            &mut policy,
            &mut policy_opt,
            split,
            schema,
            &config.model_spec,
            config.model_optimizer,
            &lmat,
            config.reward_mode,
            config.mc_samples,
            search_seed,
        )?;
        let slot = lmat.slot_for_epoch(t);
        lmat.write_row(slot, &outcome.losses)?;

        let val_seed = crate::rng::derive_seed(master, &[role::VALIDATION, t as u64]);
        let vo = validation_run(
            &mut policy,
            split,
            schema,
            &config.model_spec,
            &config.train,
            config.epsilon,
            config.selection_mode,
            val_seed,
        )?;
        let val_auc = require_auc(&vo.validation, "validation")?;
        let test_auc = require_auc(&vo.test, "test")?;
        records.push(EpochRecord {
            epoch: t,
            val_auc,
            val_logloss: vo.validation.logloss,
            test_auc,
            test_logloss: vo.test.logloss,
            subset_size: vo.subset.len(),
        });

        let better = match &best {
            None => true,
            Some((_, best_auc, best_ll, ..)) => {
                val_auc > *best_auc || (val_auc == *best_auc && vo.validation.logloss < *best_ll)
            }
        };
        if better {
            best = Some((
                t,
                val_auc,
                vo.validation.logloss,
                policy.clone(),
                vo.subset,
                vo.model,
            ));
        }
    }

    let (best_epoch, best_metric, _, best_policy, best_subset, best_model) =
        best.expect("epochs >= 1");
    Ok(DenoiseRun {
        records,
        best_epoch,
        best_metric,
        best_policy,
        best_subset,
        best_model,
    })
}

#[cfg(test)]
mod tests;
