//! Run configuration: one TOML file, CLI flags win over file values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{RceConfig, TceConfig};
use crate::engine::{RewardMode, SelectionMode};
use crate::error::{Error, Result};
use crate::models::train::TrainConfig;
use crate::models::ModelKind;
use crate::nn::optim::{AdamConfig, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Autodenoise,
    Tce,
    Rce,
    Random,
    None,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autodenoise" => Ok(Method::Autodenoise),
            "tce" => Ok(Method::Tce),
            "rce" => Ok(Method::Rce),
            "random" => Ok(Method::Random),
            "none" => Ok(Method::None),
            other => Err(Error::config(format!(
                "method must be one of autodenoise|tce|rce|random|none, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Autodenoise => "autodenoise",
            Method::Tce => "tce",
            Method::Rce => "rce",
            Method::Random => "random",
            Method::None => "none",
        };
        write!(f, "{s}")
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fm" => Ok(ModelKind::Fm),
            "deepfm" => Ok(ModelKind::DeepFmLite),
            other => Err(Error::config(format!(
                "model must be `fm` or `deepfm`, got `{other}`"
            ))),
        }
    }
}

impl FromStr for SelectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(SelectionMode::TopK),
            "individual" => Ok(SelectionMode::Individual),
            other => Err(Error::config(format!(
                "selection_mode must be `topk` or `individual`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    #[serde(default = "default_teacher_rank")]
    pub teacher_rank: usize,
    /// Generation seed; defaults to the master seed. Pin it to reuse one
    /// dataset across several master seeds.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_teacher_rank() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset CSV file or a prepared bundle directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// In-memory synthetic dataset instead of a file.
    #[serde(default)]
    pub synth: Option<SynthSpec>,
    /// Shuffle seed for the 80/10/10 split; defaults to the master seed.
    #[serde(default)]
    pub split_seed: Option<u64>,
    #[serde(default = "default_ratios")]
    pub ratios: (f64, f64, f64),
}

fn default_ratios() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: None,
            synth: None,
            split_seed: None,
            ratios: default_ratios(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub flip_rate: f64,
    /// Defaults to the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub batchnorm: bool,
    #[serde(default = "default_model_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
}

fn default_model_kind() -> ModelKind {
    ModelKind::DeepFmLite
}
fn default_embedding_dim() -> usize {
    16
}
fn default_hidden_dims() -> Vec<usize> {
    vec![16, 16]
}
fn default_dropout() -> f64 {
    0.2
}
fn default_model_lr() -> f64 {
    1e-3
}
fn default_optimizer() -> String {
    "adam".into()
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: default_model_kind(),
            embedding_dim: default_embedding_dim(),
            hidden_dims: default_hidden_dims(),
            dropout: default_dropout(),
            batchnorm: false,
            learning_rate: default_model_lr(),
            optimizer: default_optimizer(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_max_epochs() -> usize {
    20
}
fn default_patience() -> usize {
    3
}
fn default_batch_size() -> usize {
    256
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            batch_size: default_batch_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    /// Selection ratio per batch in the validation phase.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Warm-up epochs C.
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    /// Overall training epochs T.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_policy_lr")]
    pub policy_learning_rate: f64,
    /// `adam` or `sgd` (the plain ascent of the update rule).
    #[serde(default = "default_optimizer")]
    pub policy_optimizer: String,
    #[serde(default = "default_policy_dropout")]
    pub policy_dropout: f64,
    #[serde(default = "default_true")]
    pub policy_batchnorm: bool,
    /// Initial select-logit bias; positive starts near select-everything.
    #[serde(default = "default_init_select_bias")]
    pub policy_init_select_bias: f64,
    #[serde(default = "default_selection_mode")]
    pub selection_mode: SelectionMode,
    #[serde(default = "default_reward_mode")]
    pub reward_mode: RewardMode,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_method() -> Method {
    Method::Autodenoise
}
fn default_epsilon() -> f64 {
    0.98
}
fn default_warmup() -> usize {
    4
}
fn default_epochs() -> usize {
    50
}
fn default_policy_lr() -> f64 {
    1e-4
}
fn default_policy_dropout() -> f64 {
    0.2
}
fn default_true() -> bool {
    true
}
fn default_selection_mode() -> SelectionMode {
    SelectionMode::TopK
}
fn default_reward_mode() -> RewardMode {
    RewardMode::Shared
}
fn default_mc_samples() -> usize {
    1
}
fn default_init_select_bias() -> f64 {
    2.0
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            method: default_method(),
            epsilon: default_epsilon(),
            warmup_epochs: default_warmup(),
            epochs: default_epochs(),
            policy_learning_rate: default_policy_lr(),
            policy_optimizer: default_optimizer(),
            policy_dropout: default_policy_dropout(),
            policy_batchnorm: true,
            policy_init_select_bias: default_init_select_bias(),
            selection_mode: default_selection_mode(),
            reward_mode: default_reward_mode(),
            mc_samples: default_mc_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_tce_rate")]
    pub tce_max_drop_rate: f64,
    #[serde(default = "default_tce_anneal")]
    pub tce_anneal_steps: u64,
    #[serde(default = "default_rce_gamma")]
    pub rce_gamma: f64,
    #[serde(default = "default_random_rate")]
    pub random_drop_rate: f64,
}

fn default_tce_rate() -> f64 {
    0.2
}
fn default_tce_anneal() -> u64 {
    100
}
fn default_rce_gamma() -> f64 {
    1.0
}
fn default_random_rate() -> f64 {
    0.2
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            tce_max_drop_rate: default_tce_rate(),
            tce_anneal_steps: default_tce_anneal(),
            rce_gamma: default_rce_gamma(),
            random_drop_rate: default_random_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stream in a run derives from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub denoise: DenoiseConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

fn default_seed() -> u64 {
    42
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: default_seed(),
            data: DataConfig::default(),
            noise: None,
            model: ModelConfig::default(),
            train: TrainSection::default(),
            denoise: DenoiseConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = toml::from_str(&text)?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::write_atomic(path, toml::to_string_pretty(self)?.as_bytes())
    }

    pub fn split_seed(&self) -> u64 {
        self.data.split_seed.unwrap_or(self.seed)
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise
            .as_ref()
            .and_then(|n| n.seed)
            .unwrap_or(self.seed)
    }

    pub fn model_optimizer(&self) -> Result<OptimizerConfig> {
        match self.model.optimizer.as_str() {
            "adam" => Ok(OptimizerConfig::Adam(AdamConfig::with_lr(
                self.model.learning_rate,
            ))),
            "sgd" => Ok(OptimizerConfig::Sgd {
                learning_rate: self.model.learning_rate,
            }),
            other => Err(Error::config(format!(
                "model.optimizer must be `adam` or `sgd`, got `{other}`"
            ))),
        }
    }

    pub fn policy_optimizer(&self) -> Result<OptimizerConfig> {
        match self.denoise.policy_optimizer.as_str() {
            "adam" => Ok(OptimizerConfig::Adam(AdamConfig::with_lr(
                self.denoise.policy_learning_rate,
            ))),
            "sgd" => Ok(OptimizerConfig::Sgd {
                learning_rate: self.denoise.policy_learning_rate,
            }),
            other => Err(Error::config(format!(
                "denoise.policy_optimizer must be `adam` or `sgd`, got `{other}`"
            ))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            batch_size: self.train.batch_size,
            optimizer: self.model_optimizer()?,
        })
    }

    pub fn tce(&self) -> TceConfig {
        TceConfig {
            max_drop_rate: self.baseline.tce_max_drop_rate,
            anneal_steps: self.baseline.tce_anneal_steps,
        }
    }

    pub fn rce(&self) -> RceConfig {
        RceConfig {
            gamma: self.baseline.rce_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.path, &self.data.synth) {
            (None, None) => return Err(Error::config("data: set either `path` or `synth`")),
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "data: `path` and `synth` are mutually exclusive",
                ))
            }
            _ => {}
        }
        if let Some(noise) = &self.noise {
            if !(0.0..=1.0).contains(&noise.flip_rate) {
                return Err(Error::config("noise.flip_rate must be in [0, 1]"));
            }
        }
        if !(self.denoise.epsilon > 0.0 && self.denoise.epsilon <= 1.0) {
            return Err(Error::config("denoise.epsilon must be in (0, 1]"));
        }
        if self.denoise.warmup_epochs == 0 {
            return Err(Error::config("denoise.warmup_epochs must be >= 1"));
        }
        if self.denoise.epochs == 0 {
            return Err(Error::config("denoise.epochs must be >= 1"));
        }
        if self.model.embedding_dim == 0 {
            return Err(Error::config("model.embedding_dim must be >= 1"));
        }
        if self.model.learning_rate <= 0.0 {
            return Err(Error::config("model.learning_rate must be > 0"));
        }
        if self.denoise.policy_learning_rate <= 0.0 {
            return Err(Error::config("denoise.policy_learning_rate must be > 0"));
        }
        self.train_config()?.validate()?;
        self.policy_optimizer()?.validate()?;
        self.tce().validate()?;
        self.rce().validate()?;
        if !(0.0..=1.0).contains(&self.baseline.random_drop_rate) {
            return Err(Error::config("baseline.random_drop_rate must be in [0, 1]"));
        }
        Ok(())
    }

    /// Stable hash of the effective configuration (canonical JSON).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let bytes = hasher.finalize();
        let mut s = String::with_capacity(bytes.len() * 2);
        for b in bytes {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}
