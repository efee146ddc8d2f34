//! Ground-truth label-noise injection: symmetric flips on the train split
//! only, with the flipped positions recorded so denoising quality is
//! measurable afterwards.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{DatasetSplit, NoiseFlag};
use crate::error::{Error, Result};
use crate::rng::{role, stream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub flip_rate: f64,
    pub seed: u64,
    /// Flipped train positions; filled by [`inject_label_noise`].
    #[serde(default)]
    pub mask: BTreeSet<usize>,
}

impl NoiseSpec {
    pub fn new(flip_rate: f64, seed: u64) -> Self {
        NoiseSpec {
            flip_rate,
            seed,
            mask: BTreeSet::new(),
        }
    }
}

/// Flips exactly `round(flip_rate * |train|)` labels, chosen by a seeded
/// shuffle of the train positions. Validation and test are untouched.
/// Every train instance gets a noise flag: `Flipped` or `Clean`.
pub fn inject_label_noise(split: &mut DatasetSplit, spec: &mut NoiseSpec) -> Result<()> {
    if !(0.0..=1.0).contains(&spec.flip_rate) {
        return Err(Error::config("flip_rate must be in [0, 1]"));
    }
    let n = split.train.len();
    let count = (spec.flip_rate * n as f64).round() as usize;

    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(spec.seed, &[role::NOISE_MASK]);
    order.shuffle(&mut rng);
    spec.mask = order.into_iter().take(count).collect();

    for inst in &mut split.train {
        if spec.mask.contains(&inst.global_position) {
            inst.label = 1 - inst.label;
            inst.noise_flag = Some(NoiseFlag::Flipped);
        } else {
            inst.noise_flag = Some(NoiseFlag::Clean);
        }
    }
    Ok(())
}
