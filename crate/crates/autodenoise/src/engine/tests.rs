use super::*;
use crate::baselines::BatchWeighting;
use crate::data::{inject_label_noise, split_dataset, synth_generate, NoiseSpec};
use crate::models::ModelKind;
use crate::policy::SELECT_COLUMN;
use crate::rng::derive_seed;

fn toy_dataset(batch_size: usize) -> (DatasetSplit, FieldSchema) {
    let out = synth_generate(30, 20, 400, 4, 1234).unwrap();
    let mut split = split_dataset(out.instances, (0.8, 0.1, 0.1), 5, batch_size).unwrap();
    let mut spec = NoiseSpec::new(0.2, 6);
    inject_label_noise(&mut split, &mut spec).unwrap();
    (split, out.schema)
}

fn fm_spec(schema: &FieldSchema) -> ModelSpec {
    ModelSpec::new(ModelKind::Fm, schema, 8)
}

fn engine_config(schema: &FieldSchema, model_spec: ModelSpec) -> EngineConfig {
    EngineConfig {
        model_spec,
        policy_spec: PolicySpec::new(schema, 8),
        model_optimizer: OptimizerConfig::adam(1e-3),
        policy_optimizer: OptimizerConfig::adam(1e-4),
        train: TrainConfig {
            max_epochs: 4,
            patience: 2,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(1e-2),
        },
        epsilon: 0.9,
        warmup_epochs: 2,
        epochs: 2,
        selection_mode: SelectionMode::TopK,
        reward_mode: RewardMode::Shared,
        mc_samples: 1,
        master_seed: 77,
    }
}

/// A policy whose select logit is saturated: always selects, and the
/// probability clamp zeroes its REINFORCE gradient, so it stays frozen.
fn saturated_select_all_policy(schema: &FieldSchema) -> PolicyParams {
    let mut policy = PolicyParams::init(&PolicySpec::new(schema, 8), 0);
    let last = policy.mlp.layers.last_mut().unwrap();
    last.bias[SELECT_COLUMN] = 50.0;
    last.bias[1 - SELECT_COLUMN] = -50.0;
    policy
}

#[test]
fn warmup_matrix_matches_replay_oracle() {
    // C=1 on a tiny 2-batch dataset: replay the same trajectory with the
    // public model ops and compare per-instance losses.
    let (split, schema) = toy_dataset(200); // train=320 -> 2 batches
    assert_eq!(split.batch_count(), 2);
    let spec = fm_spec(&schema);
    let lmat = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 1, 42).unwrap();

    let epoch_seed = derive_seed(42, &[crate::rng::role::WARMUP_EPOCH, 0]);
    let mut model = CtrModel::init(
        &spec,
        derive_seed(epoch_seed, &[crate::rng::role::MODEL_REINIT]),
    );
    let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), model.param_len());
    let mut replay = vec![0.0; split.train.len()];
    for (b, batch) in split.batches().enumerate() {
        // Forward-only loss recording at the current parameters, then the
        // same full-batch update.
        let mut probe = model.clone();
        let bl = crate::models::batch_loss(&mut probe, batch, &schema, &vec![true; batch.len()])
            .unwrap();
        for (inst, &loss) in batch.iter().zip(&bl.per_instance) {
            replay[inst.global_position] = loss;
        }
        let mut rng =
            crate::rng::stream(epoch_seed, &[crate::rng::role::MODEL_TRAIN_FWD, b as u64]);
        crate::models::model_update(
            &mut model,
            batch,
            &schema,
            &vec![true; batch.len()],
            &mut opt,
            &mut rng,
        )
        .unwrap();
    }
    assert_eq!(lmat.row(0), replay.as_slice());
    assert!(lmat.row(0).iter().all(|&l| l.is_finite() && l > 0.0));
}

#[test]
fn warmup_is_deterministic() {
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let a = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 2, 9).unwrap();
    let b = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 2, 9).unwrap();
    assert_eq!(a, b);
    let c = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 2, 10).unwrap();
    assert_ne!(a, c);
}

#[test]
fn search_with_frozen_select_all_policy_replays_a_plain_epoch() {
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let lmat = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 2, 11).unwrap();

    let epoch_seed = 0xFEED;
    let mut plain_model = CtrModel::init(
        &spec,
        derive_seed(epoch_seed, &[crate::rng::role::MODEL_REINIT]),
    );
    let mut plain_opt = Optimizer::new(OptimizerConfig::adam(1e-3), plain_model.param_len());
    let plain_losses = run_plain_epoch(
        &mut plain_model,
        &mut plain_opt,
        &split,
        &schema,
        epoch_seed,
    )
    .unwrap();

    let mut policy = saturated_select_all_policy(&schema);
    let policy_snapshot = policy.clone();
    let mut policy_opt = Optimizer::new(OptimizerConfig::adam(1e-4), policy.param_len());
    let outcome = search_epoch(
        &mut policy,
        &mut policy_opt,
        &split,
        &schema,
        &spec,
        OptimizerConfig::adam(1e-3),
        &lmat,
        RewardMode::Shared,
        1,
        epoch_seed,
    )
    .unwrap();

    // Same recorded losses, same final model, untouched policy weights.
    assert_eq!(outcome.losses, plain_losses);
    assert_eq!(outcome.final_model, plain_model);
    assert_eq!(policy.embeddings, policy_snapshot.embeddings);
    for (a, b) in policy.mlp.layers.iter().zip(&policy_snapshot.mlp.layers) {
        assert_eq!(a.weight, b.weight);
        assert_eq!(a.bias, b.bias);
    }
}

#[test]
fn search_epoch_covers_every_position_and_moves_the_policy() {
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let lmat = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 2, 12).unwrap();
    let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), 13);
    let before = policy.clone();
    let mut policy_opt = Optimizer::new(OptimizerConfig::adam(1e-4), policy.param_len());
    let outcome = search_epoch(
        &mut policy,
        &mut policy_opt,
        &split,
        &schema,
        &spec,
        OptimizerConfig::adam(1e-3),
        &lmat,
        RewardMode::Shared,
        1,
        14,
    )
    .unwrap();
    // from_slots already guarantees full coverage; check the length and
    // that nonzero rewards moved the policy.
    assert_eq!(outcome.losses.len(), split.train.len());
    assert_ne!(policy.embeddings, before.embeddings);
}

#[test]
fn unfilled_matrix_rejects_search() {
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let lmat = LossMatrix::new(4, split.train.len()).unwrap();
    let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), 15);
    let mut policy_opt = Optimizer::new(OptimizerConfig::adam(1e-4), policy.param_len());
    let r = search_epoch(
        &mut policy,
        &mut policy_opt,
        &split,
        &schema,
        &spec,
        OptimizerConfig::adam(1e-3),
        &lmat,
        RewardMode::Shared,
        1,
        16,
    );
    assert!(matches!(r, Err(Error::State(_))));
}

#[test]
fn model_environment_fairness_first_batch_losses_depend_only_on_seed() {
    // Two search epochs with the same epoch seed but different policies:
    // the first batch's recorded losses come from the freshly
    // reinitialized model, before any update diverges the trajectories.
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let lmat = warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), 2, 17).unwrap();
    let run = |policy_seed: u64| {
        let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), policy_seed);
        let mut policy_opt = Optimizer::new(OptimizerConfig::adam(1e-4), policy.param_len());
        search_epoch(
            &mut policy,
            &mut policy_opt,
            &split,
            &schema,
            &spec,
            OptimizerConfig::adam(1e-3),
            &lmat,
            RewardMode::Shared,
            1,
            18,
        )
        .unwrap()
    };
    let a = run(100);
    let b = run(200);
    let first_batch = split.batch(0);
    for inst in first_batch {
        assert_eq!(
            a.losses.get(inst.global_position),
            b.losses.get(inst.global_position)
        );
    }
    // Identical reinit: both runs start from the same checksummed model.
    let expected = CtrModel::init(&spec, derive_seed(18, &[crate::rng::role::MODEL_REINIT]));
    let reference = expected.reinit(derive_seed(18, &[crate::rng::role::MODEL_REINIT]));
    assert_eq!(expected, reference);
}

#[test]
fn circular_overwrite_matches_shadow_bookkeeping() {
    // Drive search epochs for T=10 with C in {2, 4}; the stored rows must
    // always be the most recent C loss vectors.
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    for c in [2usize, 4] {
        let mut lmat =
            warmup_train(&split, &schema, &spec, OptimizerConfig::adam(1e-3), c, 19).unwrap();
        let mut shadow: std::collections::VecDeque<(usize, LossVector)> = (0..c)
            .map(|row| (row, LossVector::new(lmat.row(row).to_vec()).unwrap()))
            .collect();
        let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), 20);
        let mut policy_opt = Optimizer::new(OptimizerConfig::adam(1e-4), policy.param_len());
        for t in 1..=10usize {
            let outcome = search_epoch(
                &mut policy,
                &mut policy_opt,
                &split,
                &schema,
                &spec,
                OptimizerConfig::adam(1e-3),
                &lmat,
                RewardMode::Shared,
                1,
                derive_seed(21, &[t as u64]),
            )
            .unwrap();
            let slot = lmat.slot_for_epoch(t);
            assert_eq!(slot, (t - 1) % c);
            lmat.write_row(slot, &outcome.losses).unwrap();
            shadow.pop_front();
            shadow.push_back((slot, outcome.losses));
            for (row, expect) in &shadow {
                assert_eq!(lmat.row(*row), expect.values(), "C={c} t={t} row={row}");
            }
        }
    }
}

#[test]
fn epsilon_one_validation_equals_plain_training_bit_exactly() {
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let train_cfg = TrainConfig {
        max_epochs: 5,
        patience: 2,
        batch_size: 64,
        optimizer: OptimizerConfig::adam(1e-2),
    };
    let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), 22);
    let seed = 23;
    let vo = validation_run(
        &mut policy,
        &split,
        &schema,
        &spec,
        &train_cfg,
        1.0,
        SelectionMode::TopK,
        seed,
    )
    .unwrap();
    assert_eq!(vo.subset, (0..split.train.len()).collect::<Vec<_>>());

    // Plain training with the same derived seeds.
    let mut control = CtrModel::init(&spec, derive_seed(seed, &[crate::rng::role::MODEL_REINIT]));
    let control_history = train_to_convergence(
        &mut control,
        &split.train,
        &split.validation,
        &schema,
        &train_cfg,
        &BatchWeighting::None,
        derive_seed(seed, &[crate::rng::role::VAL_TRAIN]),
    )
    .unwrap();
    assert_eq!(vo.history, control_history);
    assert_eq!(vo.model, control);
    let control_val = control.evaluate(&split.validation, &schema).unwrap();
    assert_eq!(vo.validation, control_val);
}

#[test]
fn topk_counts_per_batch_at_98_percent() {
    // Batches of 100: ceil(0.98 * 100) = 98 selected per full batch.
    let out = synth_generate(30, 20, 540, 4, 31).unwrap();
    let split = split_dataset(out.instances, (0.8, 0.1, 0.1), 32, 100).unwrap();
    assert_eq!(split.train.len(), 432);
    let schema = out.schema;
    let spec = fm_spec(&schema);
    let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), 33);
    let vo = validation_run(
        &mut policy,
        &split,
        &schema,
        &spec,
        &TrainConfig {
            max_epochs: 2,
            patience: 1,
            batch_size: 100,
            optimizer: OptimizerConfig::adam(1e-2),
        },
        0.98,
        SelectionMode::TopK,
        34,
    )
    .unwrap();
    // 4 full batches of 100 and a short one of 32: 4*98 + ceil(0.98*32)=32.
    let mut per_batch = vec![0usize; split.batch_count()];
    for &p in &vo.subset {
        per_batch[p / 100] += 1;
    }
    assert_eq!(per_batch, vec![98, 98, 98, 98, 32]);
    // Ascending unique positions.
    assert!(vo.subset.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn individual_selection_mode_runs_end_to_end() {
    let (split, schema) = toy_dataset(64);
    let spec = fm_spec(&schema);
    let mut policy = PolicyParams::init(&PolicySpec::new(&schema, 8), 35);
    let vo = validation_run(
        &mut policy,
        &split,
        &schema,
        &spec,
        &TrainConfig {
            max_epochs: 2,
            patience: 1,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(1e-2),
        },
        0.9, // ignored by individual sampling
        SelectionMode::Individual,
        36,
    )
    .unwrap();
    assert!(!vo.subset.is_empty());
    assert!(vo.subset.len() < split.train.len());
    // Fresh policy starts select-biased (init logit +2 -> p about 0.88).
    let frac = vo.subset.len() as f64 / split.train.len() as f64;
    assert!((0.75..0.99).contains(&frac), "selected fraction {frac}");
}

#[test]
fn overall_loop_is_deterministic_and_tracks_best() {
    let (split, schema) = toy_dataset(64);
    let config = engine_config(&schema, fm_spec(&schema));
    let a = overall_loop(&split, &schema, &config).unwrap();
    let b = overall_loop(&split, &schema, &config).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.best_epoch, b.best_epoch);
    assert_eq!(a.best_subset, b.best_subset);
    assert_eq!(a.best_policy, b.best_policy);
    assert_eq!(a.best_model, b.best_model);

    assert_eq!(a.records.len(), config.epochs);
    let max_auc = a
        .records
        .iter()
        .map(|r| r.val_auc)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.best_metric, max_auc);
    let best_record = &a.records[a.best_epoch - 1];
    assert_eq!(best_record.val_auc, a.best_metric);
    assert_eq!(best_record.subset_size, a.best_subset.len());
    assert!(!a.best_subset.is_empty());
}

#[test]
fn single_epoch_run_produces_one_record_and_a_subset() {
    let (split, schema) = toy_dataset(64);
    let mut config = engine_config(&schema, fm_spec(&schema));
    config.epochs = 1;
    let run = overall_loop(&split, &schema, &config).unwrap();
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.best_epoch, 1);
    assert!(!run.best_subset.is_empty());
}
