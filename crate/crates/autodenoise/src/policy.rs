//! The denoising agent: embeds each instance's fields, scores it with a
//! batchnorm/dropout MLP ending in a 2-way softmax, and learns from
//! per-instance rewards via a REINFORCE step on the sampled actions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureInstance, FieldSchema};
use crate::error::{Error, Result};
use crate::nn::matrix::DenseMatrix;
use crate::nn::mlp::{ForwardMode, MlpParams, MlpTape, OutputActivation};
use crate::nn::ops::{clamp_prob, PROB_CLAMP};
use crate::nn::optim::Optimizer;

/// Softmax output column holding the "select" probability; column 1 is
/// "deselect".
pub const SELECT_COLUMN: usize = 0;

const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub n_fields: usize,
    pub n_features: usize,
    pub embedding_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub batchnorm: bool,
    /// Initial select-column bias on the output layer. A positive value
    /// starts the policy near "select everything", so early search epochs
    /// train the environment model on nearly the same data volume as the
    /// warm-up that seeded its reward baseline.
    pub init_select_bias: f64,
}

impl PolicySpec {
    pub fn new(schema: &FieldSchema, embedding_dim: usize) -> Self {
        PolicySpec {
            n_fields: schema.num_fields(),
            n_features: schema.num_features(),
            embedding_dim,
            hidden_dims: vec![16, 16],
            dropout_rate: 0.2,
            batchnorm: true,
            init_select_bias: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub spec: PolicySpec,
    /// Per-feature embedding table (n_features x d), separate from any RS
    /// model's embeddings.
    pub embeddings: DenseMatrix,
    /// MLP from the flattened field embeddings to the 2-way softmax.
    pub mlp: MlpParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Select,
    Deselect,
}

/// Sampled actions for one batch, with the probabilities and (clamped)
/// log-probabilities the REINFORCE step needs.
#[derive(Debug, Clone)]
pub struct ActionBatch {
    pub p_select: Vec<f64>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
}

impl ActionBatch {
    pub fn selection_mask(&self) -> Vec<bool> {
        self.actions.iter().map(|&a| a == Action::Select).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    /// Monte-Carlo action samples per gradient estimate.
    pub sample_count: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { sample_count: 1 }
    }
}

/// Forward intermediates for [`reinforce_update`].
pub struct PolicyTape {
    active: Vec<Vec<usize>>,
    mlp_tape: MlpTape,
}

impl PolicyTape {
    /// Distance of the pre-ReLU activations from the kink; see
    /// [`MlpTape::min_abs_act_in`].
    pub fn min_abs_relu_input(&self) -> f64 {
        self.mlp_tape.min_abs_act_in()
    }
}

impl PolicyParams {
    pub fn init(spec: &PolicySpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let n = spec.n_features;
        let d = spec.embedding_dim;
        let values: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
        let embeddings = DenseMatrix::from_values(n, d, values).expect("init shape");
        let mut dims = vec![spec.n_fields * d];
        dims.extend_from_slice(&spec.hidden_dims);
        dims.push(2);
        let mut mlp = MlpParams::init(
            &dims,
            spec.batchnorm,
            spec.dropout_rate,
            OutputActivation::Softmax,
            &mut rng,
        );
        mlp.layers.last_mut().expect("output layer").bias[SELECT_COLUMN] = spec.init_select_bias;
        PolicyParams {
            spec: spec.clone(),
            embeddings,
            mlp,
        }
    }

    pub fn reinit(&self, seed: u64) -> Self {
        PolicyParams::init(&self.spec, seed)
    }

    pub fn param_len(&self) -> usize {
        self.embeddings.values().len() + self.mlp.param_len()
    }

    /// Scores a batch: each instance embeds to the concatenation of its
    /// field embeddings, passes the MLP, and ends in a 2-way softmax.
    /// Returns the M x 2 probability matrix and the tape.
    pub fn forward(
        &mut self,
        batch: &[FeatureInstance],
        schema: &FieldSchema,
        mode: ForwardMode,
    ) -> Result<(DenseMatrix, PolicyTape)> {
        if batch.is_empty() {
            return Err(Error::shape("empty batch"));
        }
        if schema.num_features() != self.spec.n_features
            || schema.num_fields() != self.spec.n_fields
        {
            return Err(Error::data(
                "schema does not match the policy's feature space",
            ));
        }
        let d = self.spec.embedding_dim;
        let cols = self.spec.n_fields * d;
        let mut active = Vec::with_capacity(batch.len());
        let mut input = DenseMatrix::zeros(batch.len(), cols);
        for (r, inst) in batch.iter().enumerate() {
            inst.validate(schema)?;
            let feats: Vec<usize> = inst.active_features(schema).collect();
            let row = input.row_mut(r);
            for (f, &j) in feats.iter().enumerate() {
                row[f * d..(f + 1) * d].copy_from_slice(self.embeddings.row(j));
            }
            active.push(feats);
        }
        let (probs, mlp_tape) = self.mlp.forward(&input, mode)?;
        Ok((probs, PolicyTape { active, mlp_tape }))
    }

    /// Eval-mode select probabilities, convenience for selection passes.
    pub fn select_probabilities(
        &mut self,
        batch: &[FeatureInstance],
        schema: &FieldSchema,
    ) -> Result<Vec<f64>> {
        let (probs, _) = self.forward(batch, schema, ForwardMode::Eval)?;
        Ok((0..probs.rows())
            .map(|r| probs.get(r, SELECT_COLUMN))
            .collect())
    }
}

/// Independent Bernoulli draw per instance from its select probability;
/// log-probabilities recorded on clamped values.
pub fn sample_actions(probs: &DenseMatrix, rng: &mut ChaCha8Rng) -> Result<ActionBatch> {
    if probs.cols() != 2 {
        return Err(Error::shape("action probabilities must have 2 columns"));
    }
    let m = probs.rows();
    let mut p_select = Vec::with_capacity(m);
    let mut actions = Vec::with_capacity(m);
    let mut log_probs = Vec::with_capacity(m);
    for r in 0..m {
        let p = probs.get(r, SELECT_COLUMN);
        let take = rng.random::<f64>() < p;
        p_select.push(p);
        if take {
            actions.push(Action::Select);
            log_probs.push(clamp_prob(p).ln());
        } else {
            actions.push(Action::Deselect);
            log_probs.push(clamp_prob(1.0 - p).ln());
        }
    }
    Ok(ActionBatch {
        p_select,
        actions,
        log_probs,
    })
}

/// Mask selecting exactly the `k` highest select probabilities; ties keep
/// the lower in-batch slot.
pub fn topk_select(p_select: &[f64], k: usize) -> Result<Vec<bool>> {
    let m = p_select.len();
    if k == 0 || k > m {
        return Err(Error::config(format!(
            "top-k k={k} out of range for batch of {m}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        p_select[b]
            .partial_cmp(&p_select[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; m];
    for &idx in order.iter().take(k) {
        mask[idx] = true;
    }
    Ok(mask)
}

/// One REINFORCE ascent step on the Monte-Carlo surrogate
/// `mean_samples (1/M) sum_m R_m * log_prob_m`, implemented as an
/// optimizer step on its negation. Each action sample carries its own
/// reward vector (they coincide when rewards ignore the sampled actions).
pub fn reinforce_update(
    policy: &mut PolicyParams,
    tape: &PolicyTape,
    probs: &DenseMatrix,
    samples: &[ActionBatch],
    rewards_per_sample: &[Vec<f64>],
    opt: &mut Optimizer,
) -> Result<()> {
    let m = probs.rows();
    if samples.is_empty() {
        return Err(Error::config(
            "reinforce_update needs at least one action sample",
        ));
    }
    if rewards_per_sample.len() != samples.len() {
        return Err(Error::shape("one reward vector per action sample required"));
    }
    for s in samples {
        if s.actions.len() != m {
            return Err(Error::shape("action batch length != batch length"));
        }
    }
    for rewards in rewards_per_sample {
        if rewards.len() != m {
            return Err(Error::shape("rewards length != batch length"));
        }
        if !rewards.iter().all(|r| r.is_finite()) {
            return Err(Error::NonFinite("reinforce rewards"));
        }
    }

    // d(-surrogate)/d(probability of the taken action). The clamp zeroes
    // the gradient once the probability saturates past the clamp band.
    let scale = 1.0 / (m as f64 * samples.len() as f64);
    let mut upstream = DenseMatrix::zeros(m, 2);
    for (sample, rewards) in samples.iter().zip(rewards_per_sample) {
        for (r, (action, reward)) in sample.actions.iter().zip(rewards).enumerate() {
            let col = match action {
                Action::Select => SELECT_COLUMN,
                Action::Deselect => 1 - SELECT_COLUMN,
            };
            let p = probs.get(r, col);
            if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
                let g = upstream.get(r, col) - reward * scale / p;
                upstream.set(r, col, g);
            }
        }
    }

    let grads = policy.mlp.backward(&tape.mlp_tape, &upstream)?;

    let d = policy.spec.embedding_dim;
    let mut demb = DenseMatrix::zeros(policy.spec.n_features, d);
    for (r, feats) in tape.active.iter().enumerate() {
        let gin = grads.input.row(r);
        for (f, &j) in feats.iter().enumerate() {
            let row = demb.row_mut(j);
            for k in 0..d {
                row[k] += gin[f * d + k];
            }
        }
    }

    let mut params: Vec<&mut [f64]> = vec![policy.embeddings.values_mut()];
    params.extend(policy.mlp.param_arrays_mut());
    let mut grad_arrays: Vec<&[f64]> = vec![demb.values()];
    grad_arrays.extend(grads.arrays());
    opt.apply(&mut params, &grad_arrays)
}
