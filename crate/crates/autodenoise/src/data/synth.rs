//! Synthetic interaction generator backed by a hidden low-rank teacher:
//! labels are Bernoulli draws of `sigmoid(u.v + b_u + b_i)`, which gives a
//! dataset with known Bayes-optimal probabilities for diagnostics.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::dataset::FeatureInstance;
use crate::data::schema::FieldSchema;
use crate::error::{Error, Result};
use crate::nn::ops::sigmoid_raw;
use crate::rng::{role, stream};

/// Standard deviation of the teacher's per-user/per-item bias terms.
const BIAS_STD: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTeacher {
    pub rank: usize,
    /// Row-major (n_users x rank).
    pub user_factors: Vec<f64>,
    /// Row-major (n_items x rank).
    pub item_factors: Vec<f64>,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

impl SyntheticTeacher {
    /// Factors drawn Normal(0, 1/sqrt(rank)), biases Normal(0, BIAS_STD).
    pub fn sample(n_users: usize, n_items: usize, rank: usize, seed: u64) -> Self {
        let mut rng = stream(seed, &[role::TEACHER]);
        let factor = Normal::new(0.0, 1.0 / (rank as f64).sqrt()).expect("valid std");
        let bias = Normal::new(0.0, BIAS_STD).expect("valid std");
        let user_factors = (0..n_users * rank)
            .map(|_| factor.sample(&mut rng))
            .collect();
        let item_factors = (0..n_items * rank)
            .map(|_| factor.sample(&mut rng))
            .collect();
        let user_bias = (0..n_users).map(|_| bias.sample(&mut rng)).collect();
        let item_bias = (0..n_items).map(|_| bias.sample(&mut rng)).collect();
        SyntheticTeacher {
            rank,
            user_factors,
            item_factors,
            user_bias,
            item_bias,
        }
    }

    pub fn zero(n_users: usize, n_items: usize, rank: usize) -> Self {
        SyntheticTeacher {
            rank,
            user_factors: vec![0.0; n_users * rank],
            item_factors: vec![0.0; n_items * rank],
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
        }
    }

    pub fn probability(&self, user: usize, item: usize) -> f64 {
        let u = &self.user_factors[user * self.rank..(user + 1) * self.rank];
        let v = &self.item_factors[item * self.rank..(item + 1) * self.rank];
        let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        sigmoid_raw(dot + self.user_bias[user] + self.item_bias[item])
    }
}

pub struct SynthOutput {
    pub instances: Vec<FeatureInstance>,
    pub schema: FieldSchema,
    /// Bayes-optimal click probability per instance, aligned by index.
    pub teacher_probs: Vec<f64>,
    pub teacher: SyntheticTeacher,
}

/// Draws `n_interactions` distinct (user, item) pairs and labels them with
/// a freshly sampled teacher. Fully determined by the seed.
pub fn synth_generate(
    n_users: usize,
    n_items: usize,
    n_interactions: usize,
    teacher_rank: usize,
    seed: u64,
) -> Result<SynthOutput> {
    let teacher = SyntheticTeacher::sample(n_users, n_items, teacher_rank, seed);
    synth_generate_with_teacher(n_users, n_items, n_interactions, &teacher, seed)
}

/// Same pair/label sampling with a caller-supplied teacher.
pub fn synth_generate_with_teacher(
    n_users: usize,
    n_items: usize,
    n_interactions: usize,
    teacher: &SyntheticTeacher,
    seed: u64,
) -> Result<SynthOutput> {
    if n_users == 0 || n_items == 0 || teacher.rank == 0 {
        return Err(Error::config("users, items and rank must be >= 1"));
    }
    if n_interactions > n_users * n_items {
        return Err(Error::config(format!(
            "cannot draw {n_interactions} distinct pairs from {n_users} x {n_items}"
        )));
    }

    let mut pair_rng = stream(seed, &[role::PAIRS]);
    let picked = rand::seq::index::sample(&mut pair_rng, n_users * n_items, n_interactions);

    let mut label_rng = stream(seed, &[role::LABELS]);
    let mut instances = Vec::with_capacity(n_interactions);
    let mut teacher_probs = Vec::with_capacity(n_interactions);
    use rand::Rng;
    for (row, flat) in picked.iter().enumerate() {
        let user = flat / n_items;
        let item = flat % n_items;
        let p = teacher.probability(user, item);
        let label = u8::from(label_rng.random::<f64>() < p);
        let mut inst = FeatureInstance::new(vec![user as u32, item as u32], label);
        inst.global_position = row;
        instances.push(inst);
        teacher_probs.push(p);
    }

    let schema = FieldSchema::new(
        vec!["user".into(), "item".into()],
        vec![
            (0..n_users).map(|u| format!("u{u}")).collect(),
            (0..n_items).map(|i| format!("i{i}")).collect(),
        ],
    )?;
    Ok(SynthOutput {
        instances,
        schema,
        teacher_probs,
        teacher: teacher.clone(),
    })
}
