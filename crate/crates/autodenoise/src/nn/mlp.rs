//! Dense MLP with hand-written forward/backward passes.
//!
//! Hidden layers apply affine -> batchnorm (optional) -> ReLU -> inverted
//! dropout; the final layer applies affine -> output activation. Forward
//! runs on a whole batch (rows = instances) because train-mode batchnorm
//! normalizes with per-batch statistics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::matrix::DenseMatrix;
use crate::nn::ops::{sigmoid_raw, softmax_in_place};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(dim: usize) -> Self {
        BatchNormParams {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            epsilon: 1e-5,
            momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLayer {
    /// Row-major, shape (out_dim, in_dim).
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    /// Batchnorm is only ever applied on hidden layers; a value on the
    /// final layer is ignored.
    pub batchnorm: Option<BatchNormParams>,
}

impl MlpLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<MlpLayer>,
    pub dropout_rate: f64,
    pub output_activation: OutputActivation,
}

/// Which statistics and noise sources a forward pass uses. Train mode
/// needs a generator for dropout masks; eval mode consumes no randomness.
pub enum ForwardMode<'r> {
    Train(&'r mut ChaCha8Rng),
    Eval,
}

#[derive(Debug, Clone)]
struct BnTape {
    /// x-hat, the normalized pre-scale activations.
    normalized: DenseMatrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerTape {
    input: DenseMatrix,
    bn: Option<BnTape>,
    /// Tensor entering ReLU (post-batchnorm, or the affine output).
    act_in: DenseMatrix,
    /// Per-element scale applied by inverted dropout: 0 or 1/(1-rate).
    dropout_scale: Option<Vec<f64>>,
}

/// Intermediates recorded by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    hidden: Vec<LayerTape>,
    final_input: DenseMatrix,
    output: DenseMatrix,
    train_mode: bool,
}

impl MlpTape {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    /// Smallest |pre-ReLU activation| across hidden layers. Gradient tests
    /// use it to keep finite-difference probes away from the ReLU kink,
    /// where the oracle itself is invalid.
    pub fn min_abs_act_in(&self) -> f64 {
        self.hidden
            .iter()
            .flat_map(|l| l.act_in.values().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<LayerGradients>,
    /// dL/d(input), one row per batch instance.
    pub input: DenseMatrix,
}

impl MlpParams {
    /// Builds an MLP for `dims = [in, hidden.., out]` with Xavier-uniform
    /// weights and zero biases.
    pub fn init(
        dims: &[usize],
        batchnorm: bool,
        dropout_rate: f64,
        output_activation: OutputActivation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut values = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in * fan_out {
                values.push(rng.random::<f64>() * 2.0 * limit - limit);
            }
            let weight = DenseMatrix::from_values(fan_out, fan_in, values).expect("init shape");
            let is_hidden = l + 1 < n_layers;
            layers.push(MlpLayer {
                weight,
                bias: vec![0.0; fan_out],
                batchnorm: if batchnorm && is_hidden {
                    Some(BatchNormParams::new(fan_out))
                } else {
                    None
                },
            });
        }
        MlpParams {
            layers,
            dropout_rate,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    /// Checks the invariants the rest of the crate relies on.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::shape("mlp with no layers"));
        }
        for w in self.layers.windows(2) {
            if w[1].in_dim() != w[0].out_dim() {
                return Err(Error::shape(format!(
                    "layer dims do not chain: {} -> {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must be in [0, 1)"));
        }
        for layer in &self.layers {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape("bias length != out_dim"));
            }
            if let Some(bn) = &layer.batchnorm {
                if bn.running_var.iter().any(|&v| v < 0.0) {
                    return Err(Error::config("running_var entries must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Batched forward pass; one row per instance.
    pub fn forward(
        &mut self,
        input: &DenseMatrix,
        mode: ForwardMode,
    ) -> Result<(DenseMatrix, MlpTape)> {
        if input.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "mlp expects input dim {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let mut rng = match mode {
            ForwardMode::Train(r) => Some(r),
            ForwardMode::Eval => None,
        };
        let train = rng.is_some();
        let batch = input.rows();
        let n_layers = self.layers.len();
        let dropout_rate = self.dropout_rate;

        let mut hidden_tapes = Vec::with_capacity(n_layers - 1);
        let mut x = input.clone();
        for layer in self.layers[..n_layers - 1].iter_mut() {
            let z = affine_forward(&layer.weight, &layer.bias, &x);
            let (act_in, bn_tape) = match layer.batchnorm.as_mut() {
                Some(bn) => {
                    let (out, tape) = batchnorm_forward(bn, &z, train);
                    (out, Some(tape))
                }
                None => (z, None),
            };
            let mut out = act_in.clone();
            for v in out.values_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let dropout_scale = if train && dropout_rate > 0.0 {
                let rng = rng.as_mut().expect("train mode has rng");
                let keep = 1.0 - dropout_rate;
                let mut scale = vec![0.0; batch * layer.out_dim()];
                for s in &mut scale {
                    if rng.random::<f64>() < keep {
                        *s = 1.0 / keep;
                    }
                }
                for (v, s) in out.values_mut().iter_mut().zip(&scale) {
                    *v *= s;
                }
                Some(scale)
            } else {
                None
            };
            hidden_tapes.push(LayerTape {
                input: x,
                bn: bn_tape,
                act_in,
                dropout_scale,
            });
            x = out;
        }

        let last = &self.layers[n_layers - 1];
        let mut output = affine_forward(&last.weight, &last.bias, &x);
        match self.output_activation {
            OutputActivation::Softmax => {
                for r in 0..batch {
                    softmax_in_place(output.row_mut(r));
                }
            }
            OutputActivation::Sigmoid => {
                for v in output.values_mut() {
                    *v = sigmoid_raw(*v);
                }
            }
            OutputActivation::None => {}
        }
        let tape = MlpTape {
            hidden: hidden_tapes,
            final_input: x,
            output: output.clone(),
            train_mode: train,
        };
        Ok((output, tape))
    }

    /// Backward pass from dL/d(output), composing the head activation's
    /// Jacobian with the caller's loss gradient.
    pub fn backward(&self, tape: &MlpTape, upstream: &DenseMatrix) -> Result<MlpGradients> {
        if !upstream.same_shape(&tape.output) {
            return Err(Error::shape("upstream gradient shape != output shape"));
        }
        let dlogits = match self.output_activation {
            OutputActivation::None => upstream.clone(),
            OutputActivation::Sigmoid => {
                let mut d = upstream.clone();
                for (dv, &s) in d.values_mut().iter_mut().zip(tape.output.values()) {
                    *dv *= s * (1.0 - s);
                }
                d
            }
            OutputActivation::Softmax => {
                let mut d = DenseMatrix::zeros(upstream.rows(), upstream.cols());
                for r in 0..upstream.rows() {
                    let p = tape.output.row(r);
                    let up = upstream.row(r);
                    let dot: f64 = up.iter().zip(p).map(|(u, pi)| u * pi).sum();
                    for (j, slot) in d.row_mut(r).iter_mut().enumerate() {
                        *slot = p[j] * (up[j] - dot);
                    }
                }
                d
            }
        };
        self.backward_from_logits(tape, &dlogits)
    }

    /// Backward pass from dL/d(final pre-activation); used when the caller
    /// has already folded the head activation into its loss gradient.
    pub fn backward_from_logits(
        &self,
        tape: &MlpTape,
        dlogits: &DenseMatrix,
    ) -> Result<MlpGradients> {
        let n_layers = self.layers.len();
        if tape.hidden.len() != n_layers - 1 {
            return Err(Error::shape("tape does not match layer count"));
        }
        if dlogits.rows() != tape.final_input.rows() || dlogits.cols() != self.output_dim() {
            return Err(Error::shape("dlogits shape mismatch"));
        }

        let mut layer_grads: Vec<Option<LayerGradients>> = (0..n_layers).map(|_| None).collect();

        let last = &self.layers[n_layers - 1];
        let (dw, db, mut dx) = affine_backward(&last.weight, &tape.final_input, dlogits);
        layer_grads[n_layers - 1] = Some(LayerGradients {
            weight: dw,
            bias: db,
            gamma: None,
            beta: None,
        });

        for l in (0..n_layers - 1).rev() {
            let layer = &self.layers[l];
            let lt = &tape.hidden[l];

            // Dropout backward: same mask, same scale.
            if let Some(scale) = &lt.dropout_scale {
                for (dv, &s) in dx.values_mut().iter_mut().zip(scale) {
                    *dv *= s;
                }
            }
            // ReLU backward.
            for (dv, &a) in dx.values_mut().iter_mut().zip(lt.act_in.values()) {
                if a <= 0.0 {
                    *dv = 0.0;
                }
            }
            // Batchnorm backward.
            let (dz, dgamma, dbeta) = match (&layer.batchnorm, &lt.bn) {
                (Some(bn), Some(bt)) => {
                    let (dz, dg, dbt) = batchnorm_backward(bn, bt, &dx, tape.train_mode);
                    (dz, Some(dg), Some(dbt))
                }
                (None, None) => (dx, None, None),
                _ => return Err(Error::shape("tape/params batchnorm mismatch")),
            };
            let (dw, db, dinput) = affine_backward(&layer.weight, &lt.input, &dz);
            layer_grads[l] = Some(LayerGradients {
                weight: dw,
                bias: db,
                gamma: dgamma,
                beta: dbeta,
            });
            dx = dinput;
        }

        Ok(MlpGradients {
            layers: layer_grads
                .into_iter()
                .map(|g| g.expect("filled"))
                .collect(),
            input: dx,
        })
    }

    /// Ordered trainable parameter slices (running stats excluded), for the
    /// optimizer. Gradient slices from [`MlpGradients::arrays`] match.
    pub fn param_arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(layer.weight.values_mut());
            out.push(layer.bias.as_mut_slice());
            if let Some(bn) = &mut layer.batchnorm {
                out.push(bn.gamma.as_mut_slice());
                out.push(bn.beta.as_mut_slice());
            }
        }
        out
    }

    pub fn param_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weight.values().len()
                    + l.bias.len()
                    + l.batchnorm
                        .as_ref()
                        .map_or(0, |bn| bn.gamma.len() + bn.beta.len())
            })
            .sum()
    }
}

impl MlpGradients {
    pub fn arrays(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push(g.weight.values());
            out.push(g.bias.as_slice());
            if let Some(gamma) = &g.gamma {
                out.push(gamma.as_slice());
            }
            if let Some(beta) = &g.beta {
                out.push(beta.as_slice());
            }
        }
        out
    }

    /// Sums another gradient set into this one (matching structure).
    pub fn accumulate(&mut self, other: &MlpGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.values_mut().iter_mut().zip(b.weight.values()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
            if let (Some(ga), Some(gb)) = (&mut a.gamma, &b.gamma) {
                for (x, y) in ga.iter_mut().zip(gb) {
                    *x += y;
                }
            }
            if let (Some(ba), Some(bb)) = (&mut a.beta, &b.beta) {
                for (x, y) in ba.iter_mut().zip(bb) {
                    *x += y;
                }
            }
        }
    }
}

fn affine_forward(weight: &DenseMatrix, bias: &[f64], x: &DenseMatrix) -> DenseMatrix {
    let batch = x.rows();
    let out_dim = weight.rows();
    let mut z = DenseMatrix::zeros(batch, out_dim);
    for b in 0..batch {
        let xr = x.row(b);
        let zr = z.row_mut(b);
        for (o, slot) in zr.iter_mut().enumerate() {
            let wr = weight.row(o);
            let mut sum = bias[o];
            for (wi, xi) in wr.iter().zip(xr) {
                sum += wi * xi;
            }
            *slot = sum;
        }
    }
    z
}

/// Returns (dW, db, dX) for z = x W^T + b given dL/dz.
fn affine_backward(
    weight: &DenseMatrix,
    x: &DenseMatrix,
    dz: &DenseMatrix,
) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let batch = x.rows();
    let (out_dim, in_dim) = (weight.rows(), weight.cols());
    let mut dw = DenseMatrix::zeros(out_dim, in_dim);
    let mut db = vec![0.0; out_dim];
    let mut dx = DenseMatrix::zeros(batch, in_dim);
    for b in 0..batch {
        let xr = x.row(b);
        let dzr = dz.row(b);
        for o in 0..out_dim {
            let g = dzr[o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let dwr = dw.row_mut(o);
            for (slot, xi) in dwr.iter_mut().zip(xr) {
                *slot += g * xi;
            }
            let wr = weight.row(o);
            let dxr = dx.row_mut(b);
            for (slot, wi) in dxr.iter_mut().zip(wr) {
                *slot += g * wi;
            }
        }
    }
    (dw, db, dx)
}

/// Train mode normalizes with per-batch statistics (biased variance) and
/// updates the running stats; eval mode uses the running stats unchanged.
fn batchnorm_forward(
    bn: &mut BatchNormParams,
    z: &DenseMatrix,
    train: bool,
) -> (DenseMatrix, BnTape) {
    let (batch, dim) = (z.rows(), z.cols());
    let mut mean = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    if train {
        for b in 0..batch {
            for (j, &v) in z.row(b).iter().enumerate() {
                mean[j] += v;
            }
        }
        for m in &mut mean {
            *m /= batch as f64;
        }
        for b in 0..batch {
            for (j, &v) in z.row(b).iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= batch as f64;
        }
        for j in 0..dim {
            bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * mean[j];
            bn.running_var[j] = (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * var[j];
        }
    } else {
        mean.copy_from_slice(&bn.running_mean);
        var.copy_from_slice(&bn.running_var);
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + bn.epsilon).sqrt()).collect();
    let mut normalized = DenseMatrix::zeros(batch, dim);
    let mut out = DenseMatrix::zeros(batch, dim);
    for b in 0..batch {
        for j in 0..dim {
            let xh = (z.get(b, j) - mean[j]) * inv_std[j];
            normalized.set(b, j, xh);
            out.set(b, j, bn.gamma[j] * xh + bn.beta[j]);
        }
    }
    (
        out,
        BnTape {
            normalized,
            inv_std,
        },
    )
}

/// Returns (dz, dgamma, dbeta) given dL/d(bn output).
fn batchnorm_backward(
    bn: &BatchNormParams,
    tape: &BnTape,
    dy: &DenseMatrix,
    train: bool,
) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let (batch, dim) = (dy.rows(), dy.cols());
    let mut dgamma = vec![0.0; dim];
    let mut dbeta = vec![0.0; dim];
    for b in 0..batch {
        for (j, &g) in dy.row(b).iter().enumerate() {
            dgamma[j] += g * tape.normalized.get(b, j);
            dbeta[j] += g;
        }
    }
    let mut dz = DenseMatrix::zeros(batch, dim);
    if train {
        // Batch statistics participated in the forward pass, so the mean
        // and variance terms feed back into every instance.
        let n = batch as f64;
        for j in 0..dim {
            let sum_dy = dbeta[j];
            let sum_dy_xh = dgamma[j];
            let k = bn.gamma[j] * tape.inv_std[j];
            for b in 0..batch {
                let xh = tape.normalized.get(b, j);
                let g = dy.get(b, j);
                dz.set(b, j, k * (g - sum_dy / n - xh * sum_dy_xh / n));
            }
        }
    } else {
        for j in 0..dim {
            let k = bn.gamma[j] * tape.inv_std[j];
            for b in 0..batch {
                dz.set(b, j, k * dy.get(b, j));
            }
        }
    }
    (dz, dgamma, dbeta)
}
