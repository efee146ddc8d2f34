//! Command implementations behind the CLI: dataset preparation, the full
//! denoising run, baseline pipelines, subset transfer, and checkpoint
//! evaluation. Every command is a pure function of its config and seeds.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::BatchWeighting;
use crate::checkpoint;
use crate::config::{Method, RunConfig};
use crate::data::{
    inject_label_noise, load_csv, split_dataset, write_csv, DatasetSplit, FieldSchema, NoiseSpec,
    SynthOutput,
};
use crate::engine::{
    export_subset, import_subset, overall_loop, EngineConfig, EpochRecord, SubsetFile,
};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::models::train::train_to_convergence;
use crate::models::{CtrModel, ModelKind, ModelSpec};
use crate::policy::PolicySpec;
use crate::report::{save_json, BestSummary, NoiseQuality, RunReport, TransferReport};
use crate::rng::{derive_seed, role};

const REPORT_VERSION: u32 = 1;

/// Loaded-and-noised dataset, ready for a run.
pub struct PreparedData {
    pub split: DatasetSplit,
    pub schema: FieldSchema,
    /// Ground-truth flipped train positions, when known.
    pub noise_mask: Option<BTreeSet<usize>>,
    pub dataset_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskFile {
    version: u32,
    dataset_hash: String,
    flip_rate: f64,
    seed: u64,
    positions: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleMeta {
    version: u32,
    source: String,
    split_seed: u64,
    ratios: (f64, f64, f64),
    train_rows: usize,
    validation_rows: usize,
    test_rows: usize,
}

/// Loads the dataset named by the config: a synthetic spec, a raw CSV
/// (split + optional noise applied here), or a prepared bundle directory
/// (noise already baked in, mask on disk).
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let batch_size = config.train.batch_size;
    if let Some(synth) = &config.data.synth {
        let gen_seed = synth.seed.unwrap_or(config.seed);
        let out = crate::data::synth_generate(
            synth.users,
            synth.items,
            synth.interactions,
            synth.teacher_rank,
            gen_seed,
        )?;
        let mut split = split_dataset(
            out.instances,
            config.data.ratios,
            config.split_seed(),
            batch_size,
        )?;
        let noise_mask = apply_noise(config, &mut split)?;
        let dataset_hash = split.hash(&out.schema);
        return Ok(PreparedData {
            split,
            schema: out.schema,
            noise_mask,
            dataset_hash,
        });
    }

    let path = config
        .data
        .path
        .as_ref()
        .ok_or_else(|| Error::config("data: set either `path` or `synth`"))?;
    if path.is_dir() {
        if config.noise.is_some() {
            return Err(Error::config(
                "noise: a prepared bundle already carries its noise; drop the [noise] section",
            ));
        }
        return load_bundle(path, batch_size);
    }

    let (instances, schema) = load_csv(path, None)?;
    let mut split = split_dataset(
        instances,
        config.data.ratios,
        config.split_seed(),
        batch_size,
    )?;
    let noise_mask = apply_noise(config, &mut split)?;
    let dataset_hash = split.hash(&schema);
    Ok(PreparedData {
        split,
        schema,
        noise_mask,
        dataset_hash,
    })
}

fn apply_noise(config: &RunConfig, split: &mut DatasetSplit) -> Result<Option<BTreeSet<usize>>> {
    match &config.noise {
        Some(noise) if noise.flip_rate > 0.0 => {
            let mut spec = NoiseSpec::new(noise.flip_rate, config.noise_seed());
            inject_label_noise(split, &mut spec)?;
            Ok(Some(spec.mask))
        }
        _ => Ok(None),
    }
}

fn load_bundle(dir: &Path, batch_size: usize) -> Result<PreparedData> {
    let schema = FieldSchema::load(&dir.join("schema.json"))?;
    let (train, _) = load_csv(&dir.join("train.csv"), Some(&schema))?;
    let (validation, _) = load_csv(&dir.join("validation.csv"), Some(&schema))?;
    let (test, _) = load_csv(&dir.join("test.csv"), Some(&schema))?;
    let split = DatasetSplit::new(train, validation, test, batch_size)?;
    let dataset_hash = split.hash(&schema);

    let mask_path = dir.join("mask.json");
    let noise_mask = if mask_path.exists() {
        let mask: MaskFile = serde_json::from_str(&std::fs::read_to_string(&mask_path)?)?;
        if mask.dataset_hash != dataset_hash {
            return Err(Error::HashMismatch {
                expected: mask.dataset_hash,
                found: dataset_hash,
            });
        }
        Some(mask.positions.into_iter().collect())
    } else {
        None
    };
    Ok(PreparedData {
        split,
        schema,
        noise_mask,
        dataset_hash,
    })
}

fn model_spec(config: &RunConfig, schema: &FieldSchema, kind: ModelKind) -> ModelSpec {
    ModelSpec {
        kind,
        n_fields: schema.num_fields(),
        n_features: schema.num_features(),
        embedding_dim: config.model.embedding_dim,
        hidden_dims: config.model.hidden_dims.clone(),
        dropout_rate: config.model.dropout,
        batchnorm: config.model.batchnorm,
    }
}

fn policy_spec(config: &RunConfig, schema: &FieldSchema) -> PolicySpec {
    PolicySpec {
        n_fields: schema.num_fields(),
        n_features: schema.num_features(),
        embedding_dim: config.model.embedding_dim,
        hidden_dims: vec![16, 16],
        dropout_rate: config.denoise.policy_dropout,
        batchnorm: config.denoise.policy_batchnorm,
        init_select_bias: config.denoise.policy_init_select_bias,
    }
}

fn require_auc(report: &EvalReport, split_name: &str) -> Result<f64> {
    report
        .auc
        .ok_or_else(|| Error::data(format!("{split_name} split is single-class; AUC undefined")))
}

/// Paths of the artifacts a run writes.
pub struct RunArtifacts {
    pub report: PathBuf,
    pub subset: Option<PathBuf>,
    pub model_checkpoint: PathBuf,
    pub policy_checkpoint: Option<PathBuf>,
}

/// Executes the configured pipeline and writes report + checkpoints (+
/// subset file for the denoising method) under `out_dir`.
pub fn cmd_run(config: &RunConfig, out_dir: &Path) -> Result<(RunReport, RunArtifacts)> {
    config.validate()?;
    let started = Instant::now();
    let prepared = prepare_data(config)?;
    let config_hash = config.hash();
    std::fs::create_dir_all(out_dir)?;

    let report_path = out_dir.join("report.json");
    let model_path = out_dir.join("model.ckpt.json");

    let (report, artifacts) = match config.denoise.method {
        Method::Autodenoise => {
            let engine_config = EngineConfig {
                model_spec: model_spec(config, &prepared.schema, config.model.kind),
                policy_spec: policy_spec(config, &prepared.schema),
                model_optimizer: config.model_optimizer()?,
                policy_optimizer: config.policy_optimizer()?,
                train: config.train_config()?,
                epsilon: config.denoise.epsilon,
                warmup_epochs: config.denoise.warmup_epochs,
                epochs: config.denoise.epochs,
                selection_mode: config.denoise.selection_mode,
                reward_mode: config.denoise.reward_mode,
                mc_samples: config.denoise.mc_samples,
                master_seed: config.seed,
            };
            let run = overall_loop(&prepared.split, &prepared.schema, &engine_config)?;

            let selected: BTreeSet<usize> = run.best_subset.iter().copied().collect();
            let dropped: BTreeSet<usize> = (0..prepared.split.train.len())
                .filter(|p| !selected.contains(p))
                .collect();
            let denoise_quality = prepared
                .noise_mask
                .as_ref()
                .map(|mask| NoiseQuality::from_sets(&dropped, mask));

            let best_record = run.records[run.best_epoch - 1].clone();
            let subset_path = out_dir.join("subset.txt");
            export_subset(
                &subset_path,
                &SubsetFile {
                    dataset_hash: prepared.dataset_hash.clone(),
                    epsilon: config.denoise.epsilon,
                    seed: config.seed,
                    epoch: run.best_epoch,
                    config_hash: config_hash.clone(),
                    positions: run.best_subset.clone(),
                },
            )?;
            let policy_path = out_dir.join("policy.ckpt.json");
            checkpoint::save_policy(
                &policy_path,
                &run.best_policy,
                &prepared.schema,
                &config_hash,
            )?;
            checkpoint::save_model(&model_path, &run.best_model, &prepared.schema, &config_hash)?;

            let report = RunReport {
                version: REPORT_VERSION,
                method: config.denoise.method,
                config_hash: config_hash.clone(),
                dataset_hash: prepared.dataset_hash.clone(),
                config: config.clone(),
                records: run.records,
                best: BestSummary {
                    epoch: best_record.epoch,
                    val_auc: best_record.val_auc,
                    val_logloss: best_record.val_logloss,
                    test_auc: best_record.test_auc,
                    test_logloss: best_record.test_logloss,
                    subset_size: best_record.subset_size,
                },
                denoise_quality,
                wall_clock_seconds: 0.0,
            };
            let artifacts = RunArtifacts {
                report: report_path.clone(),
                subset: Some(subset_path),
                model_checkpoint: model_path.clone(),
                policy_checkpoint: Some(policy_path),
            };
            (report, artifacts)
        }
        method => {
            let weighting = match method {
                Method::None => BatchWeighting::None,
                Method::Tce => BatchWeighting::Tce(config.tce()),
                Method::Rce => BatchWeighting::Rce(config.rce()),
                Method::Random => BatchWeighting::RandomDrop {
                    rate: config.baseline.random_drop_rate,
                },
                Method::Autodenoise => unreachable!(),
            };
            let spec = model_spec(config, &prepared.schema, config.model.kind);
            let seed = derive_seed(config.seed, &[role::CONTROL_TRAIN]);
            let mut model = CtrModel::init(&spec, derive_seed(seed, &[role::MODEL_REINIT]));
            let history = train_to_convergence(
                &mut model,
                &prepared.split.train,
                &prepared.split.validation,
                &prepared.schema,
                &config.train_config()?,
                &weighting,
                derive_seed(seed, &[role::VAL_TRAIN]),
            )?;
            let val = model.evaluate(&prepared.split.validation, &prepared.schema)?;
            let test = model.evaluate(&prepared.split.test, &prepared.schema)?;
            let val_auc = require_auc(&val, "validation")?;
            let test_auc = require_auc(&test, "test")?;

            let dropped: BTreeSet<usize> = history.final_epoch_dropped.iter().copied().collect();
            let denoise_quality = prepared
                .noise_mask
                .as_ref()
                .map(|mask| NoiseQuality::from_sets(&dropped, mask));
            let record = EpochRecord {
                epoch: 1,
                val_auc,
                val_logloss: val.logloss,
                test_auc,
                test_logloss: test.logloss,
                subset_size: prepared.split.train.len() - dropped.len(),
            };
            checkpoint::save_model(&model_path, &model, &prepared.schema, &config_hash)?;
            let report = RunReport {
                version: REPORT_VERSION,
                method,
                config_hash: config_hash.clone(),
                dataset_hash: prepared.dataset_hash.clone(),
                config: config.clone(),
                records: vec![record.clone()],
                best: BestSummary {
                    epoch: 1,
                    val_auc: record.val_auc,
                    val_logloss: record.val_logloss,
                    test_auc: record.test_auc,
                    test_logloss: record.test_logloss,
                    subset_size: record.subset_size,
                },
                denoise_quality,
                wall_clock_seconds: 0.0,
            };
            let artifacts = RunArtifacts {
                report: report_path.clone(),
                subset: None,
                model_checkpoint: model_path.clone(),
                policy_checkpoint: None,
            };
            (report, artifacts)
        }
    };

    let mut report = report;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    save_json(&report_path, &report)?;
    Ok((report, artifacts))
}

/// Trains `kind` from scratch on an imported subset and on the full
/// training set with the same seed, reporting both so transfer quality is
/// directly comparable.
pub fn cmd_transfer(
    config: &RunConfig,
    subset_path: &Path,
    kind: ModelKind,
    out_dir: &Path,
) -> Result<TransferReport> {
    config.validate()?;
    let started = Instant::now();
    let prepared = prepare_data(config)?;
    let (subset_file, subset_instances) =
        import_subset(subset_path, &prepared.split, &prepared.schema)?;
    std::fs::create_dir_all(out_dir)?;

    let spec = model_spec(config, &prepared.schema, kind);
    let train_config = config.train_config()?;
    let seed = derive_seed(config.seed, &[role::CONTROL_TRAIN]);
    let reinit_seed = derive_seed(seed, &[role::MODEL_REINIT]);
    let train_seed = derive_seed(seed, &[role::VAL_TRAIN]);

    // Same seeds on both sides: with an epsilon = 1 subset the two
    // trainings see identical data and produce identical metrics.
    let mut transfer_model = CtrModel::init(&spec, reinit_seed);
    train_to_convergence(
        &mut transfer_model,
        &subset_instances,
        &prepared.split.validation,
        &prepared.schema,
        &train_config,
        &BatchWeighting::None,
        train_seed,
    )?;
    let transfer_val = transfer_model.evaluate(&prepared.split.validation, &prepared.schema)?;
    let transfer_test = transfer_model.evaluate(&prepared.split.test, &prepared.schema)?;

    let mut control_model = CtrModel::init(&spec, reinit_seed);
    train_to_convergence(
        &mut control_model,
        &prepared.split.train,
        &prepared.split.validation,
        &prepared.schema,
        &train_config,
        &BatchWeighting::None,
        train_seed,
    )?;
    let control_val = control_model.evaluate(&prepared.split.validation, &prepared.schema)?;
    let control_test = control_model.evaluate(&prepared.split.test, &prepared.schema)?;

    let report = TransferReport {
        version: REPORT_VERSION,
        model: kind.to_string(),
        config_hash: config.hash(),
        dataset_hash: prepared.dataset_hash,
        subset_epoch: subset_file.epoch,
        subset_epsilon: subset_file.epsilon,
        subset_size: subset_file.positions.len(),
        transfer_val_auc: require_auc(&transfer_val, "validation")?,
        transfer_val_logloss: transfer_val.logloss,
        transfer_test_auc: require_auc(&transfer_test, "test")?,
        transfer_test_logloss: transfer_test.logloss,
        control_val_auc: require_auc(&control_val, "validation")?,
        control_val_logloss: control_val.logloss,
        control_test_auc: require_auc(&control_test, "test")?,
        control_test_logloss: control_test.logloss,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    checkpoint::save_model(
        &out_dir.join("transfer_model.ckpt.json"),
        &transfer_model,
        &prepared.schema,
        &config.hash(),
    )?;
    save_json(&out_dir.join("transfer_report.json"), &report)?;
    Ok(report)
}

/// Forward-only evaluation of a model checkpoint on one split.
pub fn cmd_eval(
    config: &RunConfig,
    checkpoint_path: &Path,
    split_name: &str,
) -> Result<EvalReport> {
    config.validate()?;
    let prepared = prepare_data(config)?;
    let mut model = checkpoint::load_model(checkpoint_path, &prepared.schema)?;
    let instances = match split_name {
        "train" => &prepared.split.train,
        "validation" => &prepared.split.validation,
        "test" => &prepared.split.test,
        other => {
            return Err(Error::config(format!(
                "split must be train|validation|test, got `{other}`"
            )))
        }
    };
    model.evaluate(instances, &prepared.schema)
}

/// Generates a synthetic dataset and writes `dataset.csv`, `schema.json`,
/// and `teacher.json` (Bayes probabilities for diagnostics).
pub fn cmd_synth(
    users: usize,
    items: usize,
    interactions: usize,
    teacher_rank: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<SynthOutput> {
    let out = crate::data::synth_generate(users, items, interactions, teacher_rank, seed)?;
    std::fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("dataset.csv"), &out.instances, &out.schema)?;
    out.schema.save(&out_dir.join("schema.json"))?;
    #[derive(Serialize)]
    struct TeacherDump<'a> {
        seed: u64,
        teacher_rank: usize,
        bayes_probabilities: &'a [f64],
    }
    save_json(
        &out_dir.join("teacher.json"),
        &TeacherDump {
            seed,
            teacher_rank,
            bayes_probabilities: &out.teacher_probs,
        },
    )?;
    Ok(out)
}

/// Splits a dataset CSV, flips train labels at the given rate, and writes
/// a prepared bundle: per-split CSVs, schema, ground-truth mask, meta.
pub fn cmd_noise(
    dataset_csv: &Path,
    flip_rate: f64,
    noise_seed: u64,
    split_seed: u64,
    ratios: (f64, f64, f64),
    out_dir: &Path,
) -> Result<PathBuf> {
    let (instances, schema) = load_csv(dataset_csv, None)?;
    // Batch size is irrelevant to bundle contents; positions are split
    // ordinals.
    let mut split = split_dataset(instances, ratios, split_seed, 256)?;
    let mut spec = NoiseSpec::new(flip_rate, noise_seed);
    inject_label_noise(&mut split, &mut spec)?;
    let dataset_hash = split.hash(&schema);

    std::fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("train.csv"), &split.train, &schema)?;
    write_csv(&out_dir.join("validation.csv"), &split.validation, &schema)?;
    write_csv(&out_dir.join("test.csv"), &split.test, &schema)?;
    schema.save(&out_dir.join("schema.json"))?;
    save_json(
        &out_dir.join("mask.json"),
        &MaskFile {
            version: REPORT_VERSION,
            dataset_hash,
            flip_rate,
            seed: noise_seed,
            positions: spec.mask.iter().copied().collect(),
        },
    )?;
    save_json(
        &out_dir.join("meta.json"),
        &BundleMeta {
            version: REPORT_VERSION,
            source: dataset_csv.display().to_string(),
            split_seed,
            ratios,
            train_rows: split.train.len(),
            validation_rows: split.validation.len(),
            test_rows: split.test.len(),
        },
    )?;
    Ok(out_dir.to_path_buf())
}
