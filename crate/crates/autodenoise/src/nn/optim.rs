//! First-order optimizers over flat parameter arrays.
//!
//! Models expose their parameters as an ordered list of slices; the
//! optimizer state is sized to the concatenation and applied pairwise, so
//! the same state type serves every network in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd { learning_rate: f64 },
    Adam(AdamConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig::Adam(AdamConfig::with_lr(learning_rate))
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            OptimizerConfig::Sgd { learning_rate } => *learning_rate,
            OptimizerConfig::Adam(c) => c.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate() <= 0.0 {
            return Err(Error::config("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(total_len: usize, cfg: AdamConfig) -> Self {
        AdamState {
            m: vec![0.0; total_len],
            v: vec![0.0; total_len],
            step: 0,
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam(AdamState),
}

impl Optimizer {
    /// Builds fresh state for a parameter set of `total_len` scalars.
    pub fn new(cfg: OptimizerConfig, total_len: usize) -> Self {
        match cfg {
            OptimizerConfig::Sgd { learning_rate } => Optimizer::Sgd { learning_rate },
            OptimizerConfig::Adam(c) => Optimizer::Adam(AdamState::new(total_len, c)),
        }
    }

    /// One update step. `params` and `grads` are matching ordered slice
    /// lists whose total lengths equal the state size.
    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "optimizer got {} parameter arrays but {} gradient arrays",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads.iter()) {
            if p.len() != g.len() {
                return Err(Error::shape(format!(
                    "parameter array of len {} paired with gradient of len {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        match self {
            Optimizer::Sgd { learning_rate } => {
                let lr = *learning_rate;
                for (p, g) in params.iter_mut().zip(grads.iter()) {
                    for (pi, gi) in p.iter_mut().zip(g.iter()) {
                        *pi -= lr * gi;
                    }
                }
                Ok(())
            }
            Optimizer::Adam(state) => adam_step(state, params, grads),
        }
    }
}

/// Standard bias-corrected Adam update; increments the step counter.
pub fn adam_step(state: &mut AdamState, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    let total: usize = params.iter().map(|p| p.len()).sum();
    if total != state.m.len() {
        return Err(Error::shape(format!(
            "adam state holds {} scalars, update covers {}",
            state.m.len(),
            total
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.cfg;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    let mut offset = 0;
    for (p, g) in params.iter_mut().zip(grads.iter()) {
        for (i, (pi, gi)) in p.iter_mut().zip(g.iter()).enumerate() {
            let m = &mut state.m[offset + i];
            let v = &mut state.v[offset + i];
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *pi -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        offset += p.len();
    }
    Ok(())
}
