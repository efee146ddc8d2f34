//! CTR backbones: a second-order factorization machine and a DeepFM-lite
//! variant that adds an MLP over the instance's (shared) field embeddings.
//! Both expose per-instance losses and a weighted batch update, which the
//! denoising engine and the baselines drive.

pub mod train;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureInstance, FieldSchema};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::nn::matrix::DenseMatrix;
use crate::nn::mlp::{ForwardMode, MlpParams, MlpTape, OutputActivation};
use crate::nn::ops::{bce_logit_grad, bce_per_instance, sigmoid_raw};
use crate::nn::optim::Optimizer;

/// Initialization scale for embeddings and linear weights.
const INIT_STD: f64 = 0.01;

/// Chunk size for forward-only evaluation passes.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fm,
    #[serde(rename = "deepfm")]
    DeepFmLite,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Fm => write!(f, "fm"),
            ModelKind::DeepFmLite => write!(f, "deepfm"),
        }
    }
}

/// Shape and hyperparameters a backbone is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n_fields: usize,
    pub n_features: usize,
    pub embedding_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub dropout_rate: f64,
    pub batchnorm: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, schema: &FieldSchema, embedding_dim: usize) -> Self {
        ModelSpec {
            kind,
            n_fields: schema.num_fields(),
            n_features: schema.num_features(),
            embedding_dim,
            hidden_dims: vec![16, 16],
            dropout_rate: 0.2,
            batchnorm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmParams {
    pub w0: f64,
    /// Linear weight per global feature.
    pub w: Vec<f64>,
    /// Embeddings, row-major (n_features x d).
    pub v: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepFmLiteParams {
    pub fm: FmParams,
    /// MLP over the concatenated field embeddings; scalar output added to
    /// the FM logit before the sigmoid.
    pub mlp: MlpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrModel {
    pub spec: ModelSpec,
    pub params: CtrParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CtrParams {
    Fm(FmParams),
    DeepFmLite(DeepFmLiteParams),
}

/// Everything the batch update needs from a forward pass.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    /// Per-instance clamped BCE, computed for every instance whether or
    /// not it is later selected.
    pub losses: Vec<f64>,
    pub labels: Vec<u8>,
    active: Vec<Vec<usize>>,
    /// Per instance: sum of active embeddings per factor dim.
    field_sums: Vec<Vec<f64>>,
    mlp_tape: Option<MlpTape>,
}

/// Result of [`batch_loss`]: losses for all instances plus the mean over
/// the selected ones.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub per_instance: Vec<f64>,
    pub selected_mean: f64,
    pub selected_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// Nothing selected; the update was skipped.
    SkippedEmptySelection,
}

impl BatchForward {
    /// Distance of the deep branch's pre-ReLU activations from the kink;
    /// `None` for pure FM forwards. Finite-difference checks use this to
    /// reject probe points where the numeric oracle is invalid.
    pub fn min_abs_relu_input(&self) -> Option<f64> {
        self.mlp_tape.as_ref().map(|t| t.min_abs_act_in())
    }
}

impl CtrModel {
    /// Freshly initialized model: embeddings and linear weights
    /// Normal(0, 0.01^2), MLP weights Xavier-uniform, biases zero.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let n = spec.n_features;
        let d = spec.embedding_dim;
        let w: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let v_values: Vec<f64> = (0..n * d).map(|_| normal.sample(&mut rng)).collect();
        let fm = FmParams {
            w0: 0.0,
            w,
            v: DenseMatrix::from_values(n, d, v_values).expect("init shape"),
        };
        let params = match spec.kind {
            ModelKind::Fm => CtrParams::Fm(fm),
            ModelKind::DeepFmLite => {
                let mut dims = vec![spec.n_fields * d];
                dims.extend_from_slice(&spec.hidden_dims);
                dims.push(1);
                let mlp = MlpParams::init(
                    &dims,
                    spec.batchnorm,
                    spec.dropout_rate,
                    OutputActivation::None,
                    &mut rng,
                );
                CtrParams::DeepFmLite(DeepFmLiteParams { fm, mlp })
            }
        };
        CtrModel {
            spec: spec.clone(),
            params,
        }
    }

    /// Same shape, fresh parameters drawn from `seed`.
    pub fn reinit(&self, seed: u64) -> Self {
        CtrModel::init(&self.spec, seed)
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    fn fm(&self) -> &FmParams {
        match &self.params {
            CtrParams::Fm(fm) => fm,
            CtrParams::DeepFmLite(p) => &p.fm,
        }
    }

    /// FM logit for one instance's active features, plus the per-dim sums
    /// of active embeddings (reused by the gradient).
    fn fm_logit(&self, active: &[usize]) -> (f64, Vec<f64>) {
        let fm = self.fm();
        let d = self.spec.embedding_dim;
        let mut logit = fm.w0;
        let mut sums = vec![0.0; d];
        let mut sq_sums = vec![0.0; d];
        for &j in active {
            logit += fm.w[j];
            let row = fm.v.row(j);
            for (f, &vf) in row.iter().enumerate() {
                sums[f] += vf;
                sq_sums[f] += vf * vf;
            }
        }
        for f in 0..d {
            logit += 0.5 * (sums[f] * sums[f] - sq_sums[f]);
        }
        (logit, sums)
    }

    /// Forward for a single instance (eval semantics).
    pub fn forward_one(
        &mut self,
        instance: &FeatureInstance,
        schema: &FieldSchema,
    ) -> Result<(f64, f64)> {
        let fwd = self.batch_forward(std::slice::from_ref(instance), schema, None)?;
        Ok((fwd.probs[0], fwd.logits[0]))
    }

    /// Batched forward pass. `rng = Some(..)` runs train mode (dropout and
    /// batch statistics live); `None` is a pure eval pass.
    pub fn batch_forward(
        &mut self,
        batch: &[FeatureInstance],
        schema: &FieldSchema,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchForward> {
        if batch.is_empty() {
            return Err(Error::shape("empty batch"));
        }
        if schema.num_features() != self.spec.n_features
            || schema.num_fields() != self.spec.n_fields
        {
            return Err(Error::data(
                "schema does not match the model's feature space",
            ));
        }
        let m = batch.len();
        let d = self.spec.embedding_dim;
        let mut active = Vec::with_capacity(m);
        for inst in batch {
            inst.validate(schema)?;
            active.push(inst.active_features(schema).collect::<Vec<_>>());
        }

        let mut logits = Vec::with_capacity(m);
        let mut field_sums = Vec::with_capacity(m);
        for a in &active {
            let (logit, sums) = self.fm_logit(a);
            logits.push(logit);
            field_sums.push(sums);
        }

        let mlp_tape = match &mut self.params {
            CtrParams::Fm(_) => None,
            CtrParams::DeepFmLite(p) => {
                let cols = self.spec.n_fields * d;
                let mut input = DenseMatrix::zeros(m, cols);
                for (r, a) in active.iter().enumerate() {
                    let row = input.row_mut(r);
                    for (f, &j) in a.iter().enumerate() {
                        row[f * d..(f + 1) * d].copy_from_slice(p.fm.v.row(j));
                    }
                }
                let mode = match rng {
                    Some(r) => ForwardMode::Train(r),
                    None => ForwardMode::Eval,
                };
                let (out, tape) = p.mlp.forward(&input, mode)?;
                for (r, logit) in logits.iter_mut().enumerate() {
                    *logit += out.get(r, 0);
                }
                Some(tape)
            }
        };

        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid_raw(z)).collect();
        let labels: Vec<u8> = batch.iter().map(|i| i.label).collect();
        let losses: Vec<f64> = labels
            .iter()
            .zip(&probs)
            .map(|(&y, &p)| bce_per_instance(y, p))
            .collect();
        Ok(BatchForward {
            probs,
            logits,
            losses,
            labels,
            active,
            field_sums,
            mlp_tape,
        })
    }

    /// One optimizer step on the weighted-mean loss `sum(w*l)/sum(w)`.
    /// Instances with weight zero contribute nothing to the gradient; an
    /// all-zero weight vector skips the step.
    pub fn apply_gradient(
        &mut self,
        fwd: &BatchForward,
        weights: &[f64],
        opt: &mut Optimizer,
    ) -> Result<UpdateOutcome> {
        let m = fwd.probs.len();
        if weights.len() != m {
            return Err(Error::shape("weights length != batch length"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Ok(UpdateOutcome::SkippedEmptySelection);
        }
        // dL/dlogit per instance.
        let dlogits: Vec<f64> = (0..m)
            .map(|i| weights[i] / total * bce_logit_grad(fwd.labels[i], fwd.probs[i]))
            .collect();

        let d = self.spec.embedding_dim;
        let n = self.spec.n_features;
        let mut dw0 = 0.0;
        let mut dw = vec![0.0; n];
        let mut dv = DenseMatrix::zeros(n, d);
        {
            let fm = self.fm();
            for (i, &g) in dlogits.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                dw0 += g;
                for &j in &fwd.active[i] {
                    dw[j] += g;
                    let vrow = fm.v.row(j);
                    let drow = dv.row_mut(j);
                    for f in 0..d {
                        drow[f] += g * (fwd.field_sums[i][f] - vrow[f]);
                    }
                }
            }
        }

        match &mut self.params {
            CtrParams::Fm(fm) => {
                let mut w0_slice = [fm.w0];
                opt.apply(
                    &mut [&mut w0_slice, fm.w.as_mut_slice(), fm.v.values_mut()],
                    &[&[dw0], &dw, dv.values()],
                )?;
                fm.w0 = w0_slice[0];
            }
            CtrParams::DeepFmLite(p) => {
                let tape = fwd
                    .mlp_tape
                    .as_ref()
                    .ok_or_else(|| Error::state("forward tape missing MLP intermediates"))?;
                let mut upstream = DenseMatrix::zeros(m, 1);
                for (i, &g) in dlogits.iter().enumerate() {
                    upstream.set(i, 0, g);
                }
                let mlp_grads = p.mlp.backward_from_logits(tape, &upstream)?;
                // Embeddings feed the MLP input too; scatter those grads
                // back onto the shared table.
                for (i, a) in fwd.active.iter().enumerate() {
                    let gin = mlp_grads.input.row(i);
                    for (f, &j) in a.iter().enumerate() {
                        let drow = dv.row_mut(j);
                        for k in 0..d {
                            drow[k] += gin[f * d + k];
                        }
                    }
                }
                let mut w0_slice = [p.fm.w0];
                let mut params: Vec<&mut [f64]> =
                    vec![&mut w0_slice, p.fm.w.as_mut_slice(), p.fm.v.values_mut()];
                params.extend(p.mlp.param_arrays_mut());
                let dw0_slice = [dw0];
                let mut grads: Vec<&[f64]> = vec![&dw0_slice, &dw, dv.values()];
                grads.extend(mlp_grads.arrays());
                opt.apply(&mut params, &grads)?;
                p.fm.w0 = w0_slice[0];
            }
        }
        Ok(UpdateOutcome::Applied)
    }

    /// Total trainable parameter count, for optimizer state sizing.
    pub fn param_len(&self) -> usize {
        let fm_len = 1 + self.spec.n_features + self.spec.n_features * self.spec.embedding_dim;
        match &self.params {
            CtrParams::Fm(_) => fm_len,
            CtrParams::DeepFmLite(p) => fm_len + p.mlp.param_len(),
        }
    }

    /// Eval-mode probabilities for a list of instances.
    pub fn predict(
        &mut self,
        instances: &[FeatureInstance],
        schema: &FieldSchema,
    ) -> Result<Vec<f64>> {
        let mut probs = Vec::with_capacity(instances.len());
        for chunk in instances.chunks(EVAL_CHUNK) {
            let fwd = self.batch_forward(chunk, schema, None)?;
            probs.extend(fwd.probs);
        }
        Ok(probs)
    }

    /// Eval-mode AUC/logloss on a split.
    pub fn evaluate(
        &mut self,
        instances: &[FeatureInstance],
        schema: &FieldSchema,
    ) -> Result<EvalReport> {
        let probs = self.predict(instances, schema)?;
        let labels: Vec<u8> = instances.iter().map(|i| i.label).collect();
        EvalReport::from_scores(&labels, &probs)
    }
}

/// Eval-mode per-instance losses for every instance plus the mean over the
/// mask. An empty selection reports `selected_count == 0` with mean zero.
pub fn batch_loss(
    model: &mut CtrModel,
    batch: &[FeatureInstance],
    schema: &FieldSchema,
    mask: &[bool],
) -> Result<BatchLoss> {
    if mask.len() != batch.len() {
        return Err(Error::shape("mask length != batch length"));
    }
    let fwd = model.batch_forward(batch, schema, None)?;
    let selected_count = mask.iter().filter(|&&s| s).count();
    let selected_mean = if selected_count == 0 {
        0.0
    } else {
        fwd.losses
            .iter()
            .zip(mask)
            .filter(|(_, &s)| s)
            .map(|(l, _)| l)
            .sum::<f64>()
            / selected_count as f64
    };
    Ok(BatchLoss {
        per_instance: fwd.losses,
        selected_mean,
        selected_count,
    })
}

/// One train-mode forward plus one optimizer step on the instances the
/// mask selects.
pub fn model_update(
    model: &mut CtrModel,
    batch: &[FeatureInstance],
    schema: &FieldSchema,
    mask: &[bool],
    opt: &mut Optimizer,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateOutcome> {
    if mask.len() != batch.len() {
        return Err(Error::shape("mask length != batch length"));
    }
    let fwd = model.batch_forward(batch, schema, Some(rng))?;
    let weights: Vec<f64> = mask.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    model.apply_gradient(&fwd, &weights, opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::fd::{finite_difference_gradient, relative_error};
    use crate::nn::optim::OptimizerConfig;
    use crate::rng::stream;
    use rand::Rng;

    fn toy_schema() -> FieldSchema {
        FieldSchema::new(
            vec!["user".into(), "item".into(), "ctx".into()],
            vec![
                (0..4).map(|i| format!("u{i}")).collect(),
                (0..3).map(|i| format!("i{i}")).collect(),
                (0..2).map(|i| format!("c{i}")).collect(),
            ],
        )
        .unwrap()
    }

    fn spec(kind: ModelKind, schema: &FieldSchema, d: usize) -> ModelSpec {
        let mut s = ModelSpec::new(kind, schema, d);
        s.hidden_dims = vec![5, 4];
        s
    }

    fn random_instance(schema: &FieldSchema, rng: &mut rand_chacha::ChaCha8Rng) -> FeatureInstance {
        let values: Vec<u32> = (0..schema.num_fields())
            .map(|f| rng.random_range(0..schema.vocab_size(f)) as u32)
            .collect();
        FeatureInstance::new(values, u8::from(rng.random::<f64>() < 0.5))
    }

    #[test]
    fn all_zero_params_predict_half() {
        let schema = toy_schema();
        let mut model = CtrModel::init(&spec(ModelKind::Fm, &schema, 4), 0);
        match &mut model.params {
            CtrParams::Fm(fm) => {
                fm.w0 = 0.0;
                fm.w.fill(0.0);
                fm.v.values_mut().fill(0.0);
            }
            _ => unreachable!(),
        }
        let inst = FeatureInstance::new(vec![1, 2, 0], 1);
        let (p, logit) = model.forward_one(&inst, &schema).unwrap();
        assert_eq!(logit, 0.0);
        assert_eq!(p, 0.5);
    }

    #[test]
    fn single_active_feature_linear_only() {
        // One field, V zero: logit = w0 + w[active].
        let schema =
            FieldSchema::new(vec!["f".into()], vec![vec!["a".into(), "b".into()]]).unwrap();
        let mut model = CtrModel::init(&ModelSpec::new(ModelKind::Fm, &schema, 4), 0);
        match &mut model.params {
            CtrParams::Fm(fm) => {
                fm.w0 = 0.1;
                fm.w = vec![0.3, 0.0];
                fm.v.values_mut().fill(0.0);
            }
            _ => unreachable!(),
        }
        let inst = FeatureInstance::new(vec![0], 1);
        let (p, logit) = model.forward_one(&inst, &schema).unwrap();
        assert!((logit - 0.4).abs() < 1e-15);
        assert!((p - sigmoid_raw(0.4)).abs() < 1e-15);
    }

    #[test]
    fn fm_matches_bruteforce_pairwise_sum() {
        let schema = toy_schema();
        let model_spec = spec(ModelKind::Fm, &schema, 6);
        let mut rng = stream(21, &[]);
        for case in 0..1000 {
            let mut model = CtrModel::init(&model_spec, 1000 + case);
            let inst = random_instance(&schema, &mut rng);
            let (_, logit) = model.forward_one(&inst, &schema).unwrap();

            // Brute force: explicit pairwise double loop.
            let fm = model.fm();
            let active: Vec<usize> = inst.active_features(&schema).collect();
            let mut expect = fm.w0;
            for &j in &active {
                expect += fm.w[j];
            }
            for a in 0..active.len() {
                for b in a + 1..active.len() {
                    let va = fm.v.row(active[a]);
                    let vb = fm.v.row(active[b]);
                    expect += va.iter().zip(vb).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            assert!(
                (logit - expect).abs() < 1e-12,
                "case {case}: fast {logit} vs brute {expect}"
            );
        }
    }

    #[test]
    fn batch_loss_masks_and_means() {
        let schema = toy_schema();
        let mut model = CtrModel::init(&spec(ModelKind::Fm, &schema, 4), 3);
        let mut rng = stream(22, &[]);
        let batch: Vec<FeatureInstance> =
            (0..6).map(|_| random_instance(&schema, &mut rng)).collect();
        let mask = vec![true, false, true, false, true, false];
        let bl = batch_loss(&mut model, &batch, &schema, &mask).unwrap();
        assert_eq!(bl.per_instance.len(), 6);
        assert_eq!(bl.selected_count, 3);
        let expect = (bl.per_instance[0] + bl.per_instance[2] + bl.per_instance[4]) / 3.0;
        assert!((bl.selected_mean - expect).abs() < 1e-15);

        let none = batch_loss(&mut model, &batch, &schema, &[false; 6]).unwrap();
        assert_eq!(none.selected_count, 0);
        assert_eq!(none.selected_mean, 0.0);

        // All p = 0.5 -> mean loss ln 2 regardless of labels.
        match &mut model.params {
            CtrParams::Fm(fm) => {
                fm.w0 = 0.0;
                fm.w.fill(0.0);
                fm.v.values_mut().fill(0.0);
            }
            _ => unreachable!(),
        }
        let bl = batch_loss(&mut model, &batch, &schema, &[true; 6]).unwrap();
        assert!((bl.selected_mean - std::f64::consts::LN_2).abs() < 1e-12);
    }

    fn flat_params(model: &CtrModel) -> Vec<f64> {
        let mut flat = Vec::new();
        match &model.params {
            CtrParams::Fm(fm) => {
                flat.push(fm.w0);
                flat.extend_from_slice(&fm.w);
                flat.extend_from_slice(fm.v.values());
            }
            CtrParams::DeepFmLite(p) => {
                flat.push(p.fm.w0);
                flat.extend_from_slice(&p.fm.w);
                flat.extend_from_slice(p.fm.v.values());
                let mut m = p.mlp.clone();
                for arr in m.param_arrays_mut() {
                    flat.extend_from_slice(arr);
                }
            }
        }
        flat
    }

    fn set_flat(model: &mut CtrModel, flat: &[f64]) {
        match &mut model.params {
            CtrParams::Fm(fm) => {
                fm.w0 = flat[0];
                let nw = fm.w.len();
                fm.w.copy_from_slice(&flat[1..1 + nw]);
                fm.v.values_mut().copy_from_slice(&flat[1 + nw..]);
            }
            CtrParams::DeepFmLite(p) => {
                p.fm.w0 = flat[0];
                let nw = p.fm.w.len();
                p.fm.w.copy_from_slice(&flat[1..1 + nw]);
                let nv = p.fm.v.values().len();
                p.fm.v
                    .values_mut()
                    .copy_from_slice(&flat[1 + nw..1 + nw + nv]);
                let mut offset = 1 + nw + nv;
                for arr in p.mlp.param_arrays_mut() {
                    arr.copy_from_slice(&flat[offset..offset + arr.len()]);
                    offset += arr.len();
                }
            }
        }
    }

    /// Analytic gradient of the weighted batch loss via a probe SGD step
    /// of lr 1, recovered as (params - updated params).
    fn analytic_gradient(
        model: &CtrModel,
        schema: &FieldSchema,
        batch: &[FeatureInstance],
        weights: &[f64],
        fwd_seed: u64,
    ) -> Vec<f64> {
        let mut probe = model.clone();
        let mut rng = stream(fwd_seed, &[]);
        let fwd = probe.batch_forward(batch, schema, Some(&mut rng)).unwrap();
        let mut opt = Optimizer::new(
            OptimizerConfig::Sgd { learning_rate: 1.0 },
            probe.param_len(),
        );
        probe.apply_gradient(&fwd, weights, &mut opt).unwrap();
        flat_params(model)
            .iter()
            .zip(flat_params(&probe))
            .map(|(orig, new)| orig - new)
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences_for_both_backbones() {
        let schema = toy_schema();
        let mut checked = 0;
        for (case, kind) in [(0u64, ModelKind::Fm), (1, ModelKind::DeepFmLite)] {
            for sub in 0..20u64 {
                let seed = 500 + case * 100 + sub;
                let mut cfg_rng = stream(seed, &[]);
                let mut model_spec = spec(kind, &schema, 3);
                model_spec.hidden_dims = vec![4, 3];
                // Random dropout on half the DeepFM cases; mask frozen by seed.
                model_spec.dropout_rate = if kind == ModelKind::DeepFmLite && sub % 2 == 0 {
                    0.25
                } else {
                    0.0
                };
                let mut model = CtrModel::init(&model_spec, seed);
                // Perturb away from the tiny init so pairwise terms matter.
                let mut flat = flat_params(&model);
                for v in &mut flat {
                    *v += cfg_rng.random::<f64>() * 0.6 - 0.3;
                }
                set_flat(&mut model, &flat);

                let batch: Vec<FeatureInstance> = (0..4)
                    .map(|_| random_instance(&schema, &mut cfg_rng))
                    .collect();
                let weights: Vec<f64> =
                    (0..4).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();

                // Skip probe points with a pre-ReLU activation inside the
                // fd step: the oracle straddles the kink there.
                {
                    let mut probe = model.clone();
                    let mut rng = stream(seed + 7, &[]);
                    let fwd = probe
                        .batch_forward(&batch, &schema, Some(&mut rng))
                        .unwrap();
                    if let Some(tape) = &fwd.mlp_tape {
                        if tape.min_abs_act_in() < 1e-4 {
                            continue;
                        }
                    }
                }
                checked += 1;

                let analytic = analytic_gradient(&model, &schema, &batch, &weights, seed + 7);

                let base = flat_params(&model);
                let numeric = finite_difference_gradient(
                    |flat| {
                        let mut m = model.clone();
                        set_flat(&mut m, flat);
                        let mut rng = stream(seed + 7, &[]);
                        let fwd = m.batch_forward(&batch, &schema, Some(&mut rng)).unwrap();
                        let total: f64 = weights.iter().sum();
                        fwd.losses
                            .iter()
                            .zip(&weights)
                            .map(|(l, w)| w * l)
                            .sum::<f64>()
                            / total
                    },
                    &base,
                    1e-5,
                )
                .unwrap();
                for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
                    assert!(
                        relative_error(a, n) < 1e-4,
                        "{kind:?} seed {seed} param {i}: analytic {a} vs numeric {n}"
                    );
                }
            }
        }
        assert!(checked >= 32, "only {checked}/40 cases were clean probes");
    }

    #[test]
    fn update_decreases_loss_and_respects_empty_mask() {
        let schema = toy_schema();
        let mut rng = stream(30, &[]);
        let batch: Vec<FeatureInstance> =
            (0..8).map(|_| random_instance(&schema, &mut rng)).collect();
        let mut model = CtrModel::init(&spec(ModelKind::Fm, &schema, 4), 31);
        let mut opt = Optimizer::new(
            OptimizerConfig::Sgd {
                learning_rate: 1e-3,
            },
            model.param_len(),
        );

        let mask = vec![true; 8];
        let before = batch_loss(&mut model, &batch, &schema, &mask)
            .unwrap()
            .selected_mean;
        let mut fwd_rng = stream(32, &[]);
        let outcome =
            model_update(&mut model, &batch, &schema, &mask, &mut opt, &mut fwd_rng).unwrap();
        assert_eq!(outcome, UpdateOutcome::Applied);
        let after = batch_loss(&mut model, &batch, &schema, &mask)
            .unwrap()
            .selected_mean;
        assert!(after < before, "loss {before} -> {after}");

        let snapshot = model.clone();
        let mut fwd_rng = stream(33, &[]);
        let outcome = model_update(
            &mut model,
            &batch,
            &schema,
            &[false; 8],
            &mut opt,
            &mut fwd_rng,
        )
        .unwrap();
        assert_eq!(outcome, UpdateOutcome::SkippedEmptySelection);
        assert_eq!(model, snapshot);
    }

    #[test]
    fn clamped_perfect_predictions_have_negligible_gradient() {
        let schema = FieldSchema::new(vec!["f".into()], vec![vec!["a".into()]]).unwrap();
        let mut model = CtrModel::init(&ModelSpec::new(ModelKind::Fm, &schema, 2), 1);
        match &mut model.params {
            CtrParams::Fm(fm) => fm.w0 = 40.0, // p = sigmoid(40) > 1 - 1e-7
            _ => unreachable!(),
        }
        let batch = vec![FeatureInstance::new(vec![0], 1)];
        let snapshot = model.clone();
        let mut opt = Optimizer::new(
            OptimizerConfig::Sgd { learning_rate: 1.0 },
            model.param_len(),
        );
        let mut rng = stream(34, &[]);
        model_update(&mut model, &batch, &schema, &[true], &mut opt, &mut rng).unwrap();
        let moved: f64 = flat_params(&snapshot)
            .iter()
            .zip(flat_params(&model))
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(moved < 1e-6, "moved {moved}");
    }

    #[test]
    fn batch_permutation_leaves_update_invariant() {
        let schema = toy_schema();
        let mut rng = stream(40, &[]);
        let batch: Vec<FeatureInstance> =
            (0..6).map(|_| random_instance(&schema, &mut rng)).collect();
        let mut permuted = batch.clone();
        permuted.reverse();
        let mask = vec![true, true, false, true, false, true];
        let mut mask_rev = mask.clone();
        mask_rev.reverse();

        let base = CtrModel::init(&spec(ModelKind::Fm, &schema, 4), 41);

        let run = |batch: &[FeatureInstance], mask: &[bool]| -> (f64, Vec<f64>) {
            let mut m = base.clone();
            let loss = batch_loss(&mut m, batch, &schema, mask)
                .unwrap()
                .selected_mean;
            let mut opt =
                Optimizer::new(OptimizerConfig::Sgd { learning_rate: 0.1 }, m.param_len());
            let mut rng = stream(42, &[]);
            model_update(&mut m, batch, &schema, mask, &mut opt, &mut rng).unwrap();
            (loss, flat_params(&m))
        };
        let (loss_a, params_a) = run(&batch, &mask);
        let (loss_b, params_b) = run(&permuted, &mask_rev);
        assert!((loss_a - loss_b).abs() < 1e-12);
        for (a, b) in params_a.iter().zip(&params_b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reinit_is_deterministic_and_near_half() {
        let schema = toy_schema();
        let model_spec = spec(ModelKind::DeepFmLite, &schema, 4);
        let a = CtrModel::init(&model_spec, 7);
        let b = a.reinit(7);
        assert_eq!(a, b);
        let c = a.reinit(8);
        assert_ne!(a, c);

        // Fresh init keeps logits near zero: p in (0.3, 0.7) for 99% of
        // random instances.
        let mut rng = stream(50, &[]);
        let mut inside = 0;
        let total = 1000;
        let mut model = a.clone();
        for _ in 0..total {
            let inst = random_instance(&schema, &mut rng);
            let (p, _) = model.forward_one(&inst, &schema).unwrap();
            if p > 0.3 && p < 0.7 {
                inside += 1;
            }
        }
        assert!(inside >= 990, "only {inside}/{total} in (0.3, 0.7)");
    }
}
