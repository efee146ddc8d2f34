//! Instances, splits, and the fixed batch plan.
//!
//! The batch plan is position-based and immutable: batch `n` always holds
//! train positions `[n*M, min((n+1)*M, len))`, in every epoch and phase.
//! Per-instance loss bookkeeping and rewards rely on that stability.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::schema::{hex_digest, FieldSchema};
use crate::error::{Error, Result};
use crate::rng::{role, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFlag {
    Clean,
    Flipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInstance {
    /// One categorical value index per field, in schema field order.
    pub field_values: Vec<u32>,
    pub label: u8,
    /// Stable ordinal within the owning split.
    pub global_position: usize,
    /// Ground-truth noise marker, present once noise has been injected.
    pub noise_flag: Option<NoiseFlag>,
}

impl FeatureInstance {
    pub fn new(field_values: Vec<u32>, label: u8) -> Self {
        FeatureInstance {
            field_values,
            label,
            global_position: 0,
            noise_flag: None,
        }
    }

    pub fn validate(&self, schema: &FieldSchema) -> Result<()> {
        if self.field_values.len() != schema.num_fields() {
            return Err(Error::data(format!(
                "instance has {} fields, schema has {}",
                self.field_values.len(),
                schema.num_fields()
            )));
        }
        for (f, &v) in self.field_values.iter().enumerate() {
            if v as usize >= schema.vocab_size(f) {
                return Err(Error::data(format!(
                    "field {f} value {v} out of range (vocab {})",
                    schema.vocab_size(f)
                )));
            }
        }
        if self.label > 1 {
            return Err(Error::data("label must be 0 or 1"));
        }
        Ok(())
    }

    /// Global feature indices of the active features, one per field.
    pub fn active_features<'s>(
        &'s self,
        schema: &'s FieldSchema,
    ) -> impl Iterator<Item = usize> + 's {
        self.field_values
            .iter()
            .enumerate()
            .map(|(f, &v)| schema.global_index(f, v))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<FeatureInstance>,
    pub validation: Vec<FeatureInstance>,
    pub test: Vec<FeatureInstance>,
    pub batch_size: usize,
}

impl DatasetSplit {
    pub fn new(
        train: Vec<FeatureInstance>,
        validation: Vec<FeatureInstance>,
        test: Vec<FeatureInstance>,
        batch_size: usize,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        let split = DatasetSplit {
            train,
            validation,
            test,
            batch_size,
        };
        for (i, inst) in split.train.iter().enumerate() {
            if inst.global_position != i {
                return Err(Error::data(format!(
                    "train global_position {} at index {i}",
                    inst.global_position
                )));
            }
        }
        Ok(split)
    }

    /// Number of train batches, final short batch included.
    pub fn batch_count(&self) -> usize {
        self.train.len().div_ceil(self.batch_size)
    }

    /// The fixed batch plan: batch `n` is always the same slice.
    pub fn batch(&self, n: usize) -> &[FeatureInstance] {
        let start = n * self.batch_size;
        let end = ((n + 1) * self.batch_size).min(self.train.len());
        &self.train[start..end]
    }

    pub fn batches(&self) -> impl Iterator<Item = &[FeatureInstance]> {
        (0..self.batch_count()).map(|n| self.batch(n))
    }

    /// Content hash over the schema and all three splits in order; pins
    /// instance identity (positions) for subset files and checkpoints.
    pub fn hash(&self, schema: &FieldSchema) -> String {
        let mut hasher = Sha256::new();
        hasher.update(schema.hash().as_bytes());
        for (tag, part) in [
            (b"trn", &self.train),
            (b"val", &self.validation),
            (b"tst", &self.test),
        ] {
            hasher.update(tag);
            hasher.update((part.len() as u64).to_le_bytes());
            for inst in part.iter() {
                for &v in &inst.field_values {
                    hasher.update(v.to_le_bytes());
                }
                hasher.update([inst.label]);
            }
        }
        hex_digest(hasher)
    }
}

/// Deterministic shuffled split. Sizes are `floor(ratio * n)` for
/// validation and test with the remainder going to train; positions are
/// assigned after the shuffle and never change again.
pub fn split_dataset(
    mut instances: Vec<FeatureInstance>,
    ratios: (f64, f64, f64),
    seed: u64,
    batch_size: usize,
) -> Result<DatasetSplit> {
    let (r_train, r_val, r_test) = ratios;
    if ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(Error::config("split ratios must sum to 1"));
    }
    if !(0.0..=1.0).contains(&r_train)
        || !(0.0..=1.0).contains(&r_val)
        || !(0.0..=1.0).contains(&r_test)
    {
        return Err(Error::config("split ratios must lie in [0, 1]"));
    }
    let n = instances.len();
    if n < 10 {
        return Err(Error::data("need at least 10 instances to split"));
    }

    use rand::seq::SliceRandom;
    let mut rng = stream(seed, &[role::SPLIT_SHUFFLE]);
    instances.shuffle(&mut rng);

    let n_val = (r_val * n as f64).floor() as usize;
    let n_test = (r_test * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut iter = instances.into_iter();
    let mut take = |count: usize| -> Vec<FeatureInstance> {
        let mut part: Vec<FeatureInstance> = iter.by_ref().take(count).collect();
        for (i, inst) in part.iter_mut().enumerate() {
            inst.global_position = i;
            inst.noise_flag = None;
        }
        part
    };
    let train = take(n_train);
    let validation = take(n_val);
    let test = take(n_test);
    DatasetSplit::new(train, validation, test, batch_size)
}
