//! JSON run reports: config echo, per-epoch series, best-epoch summary,
//! and denoising quality against a ground-truth noise mask when one
//! exists. Reports are deterministic apart from the wall-clock field.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::engine::EpochRecord;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub epoch: usize,
    pub val_auc: f64,
    pub val_logloss: f64,
    pub test_auc: f64,
    pub test_logloss: f64,
    pub subset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseQuality {
    pub dropped: usize,
    pub flipped: usize,
    pub overlap: usize,
    /// |dropped ∩ flipped| / |dropped|; absent when nothing was dropped.
    pub precision: Option<f64>,
    /// |dropped ∩ flipped| / |flipped|; absent when nothing was flipped.
    pub recall: Option<f64>,
}

impl NoiseQuality {
    pub fn from_sets(dropped: &BTreeSet<usize>, flipped: &BTreeSet<usize>) -> Self {
        let overlap = dropped.intersection(flipped).count();
        NoiseQuality {
            dropped: dropped.len(),
            flipped: flipped.len(),
            overlap,
            precision: if dropped.is_empty() {
                None
            } else {
                Some(overlap as f64 / dropped.len() as f64)
            },
            recall: if flipped.is_empty() {
                None
            } else {
                Some(overlap as f64 / flipped.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub method: Method,
    pub config_hash: String,
    pub dataset_hash: String,
    pub config: RunConfig,
    pub records: Vec<EpochRecord>,
    pub best: BestSummary,
    pub denoise_quality: Option<NoiseQuality>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub version: u32,
    pub model: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub subset_epoch: usize,
    pub subset_epsilon: f64,
    pub subset_size: usize,
    /// Metrics of the model trained on the imported subset.
    pub transfer_val_auc: f64,
    pub transfer_val_logloss: f64,
    pub transfer_test_auc: f64,
    pub transfer_test_logloss: f64,
    /// Same-seed control trained on the full (noisy) training set.
    pub control_val_auc: f64,
    pub control_val_logloss: f64,
    pub control_test_auc: f64,
    pub control_test_logloss: f64,
    pub wall_clock_seconds: f64,
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    crate::data::write_atomic(path, text.as_bytes())
}

pub fn load_run_report(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn load_transfer_report(path: &Path) -> Result<TransferReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
