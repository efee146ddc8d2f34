//! Comparison denoisers: truncated cross-entropy (drop the largest losses
//! under an annealed rate), reweighted cross-entropy (down-weight low
//! observed-label probability), and a random-drop control. All are
//! deliberately simplified renditions that plug into the shared training
//! loop as per-batch weight functions.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TceConfig {
    /// Final drop rate, reached after `anneal_steps` optimizer steps.
    pub max_drop_rate: f64,
    pub anneal_steps: u64,
}

impl TceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.max_drop_rate) {
            return Err(Error::config("tce max_drop_rate must be in [0, 1)"));
        }
        if self.anneal_steps == 0 {
            return Err(Error::config("tce anneal_steps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RceConfig {
    /// Weight exponent; 0 recovers plain training.
    pub gamma: f64,
}

impl RceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("rce gamma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// 0/1 weights dropping the `ceil(rate(step) * M)` largest losses, where
/// `rate(step) = max_drop_rate * min(1, step / anneal_steps)`. Ties at the
/// cut keep the lower slot index.
pub fn tce_weights(losses: &[f64], step: u64, config: &TceConfig) -> Vec<f64> {
    let m = losses.len();
    let rate = config.max_drop_rate * (step as f64 / config.anneal_steps as f64).min(1.0);
    let drop = (rate * m as f64).ceil() as usize;
    let mut weights = vec![1.0; m];
    if drop == 0 {
        return weights;
    }
    // Order candidates by loss descending; equal losses drop the higher
    // slot first so the lower index survives.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| losses[b].partial_cmp(&losses[a]).unwrap().then(b.cmp(&a)));
    for &idx in order.iter().take(drop.min(m)) {
        weights[idx] = 0.0;
    }
    weights
}

/// Weights `p_hat^gamma` where `p_hat` is the predicted probability of the
/// observed label. Always in (0, 1] for probabilities in (0, 1).
pub fn rce_weights(labels: &[u8], probabilities: &[f64], config: &RceConfig) -> Vec<f64> {
    labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| {
            let observed = if y == 1 { p } else { 1.0 - p };
            observed.powf(config.gamma)
        })
        .collect()
}

/// Drops exactly `round(rate * M)` uniformly random instances.
pub fn random_drop(batch_len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let drop = (rate * batch_len as f64).round() as usize;
    let mut mask = vec![true; batch_len];
    if drop == 0 {
        return mask;
    }
    let picked = rand::seq::index::sample(rng, batch_len, drop.min(batch_len));
    for idx in picked {
        mask[idx] = false;
    }
    mask
}

/// Per-batch weighting hook used by the shared training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BatchWeighting {
    None,
    Tce(TceConfig),
    Rce(RceConfig),
    RandomDrop { rate: f64 },
}

impl BatchWeighting {
    pub fn validate(&self) -> Result<()> {
        match self {
            BatchWeighting::None => Ok(()),
            BatchWeighting::Tce(c) => c.validate(),
            BatchWeighting::Rce(c) => c.validate(),
            BatchWeighting::RandomDrop { rate } => {
                if (0.0..=1.0).contains(rate) {
                    Ok(())
                } else {
                    Err(Error::config("random drop rate must be in [0, 1]"))
                }
            }
        }
    }

    /// Weights for one batch. `step` counts optimizer steps taken so far.
    pub fn weights(
        &self,
        step: u64,
        losses: &[f64],
        labels: &[u8],
        probs: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        match self {
            BatchWeighting::None => vec![1.0; losses.len()],
            BatchWeighting::Tce(cfg) => tce_weights(losses, step, cfg),
            BatchWeighting::Rce(cfg) => rce_weights(labels, probs, cfg),
            BatchWeighting::RandomDrop { rate } => random_drop(losses.len(), *rate, rng)
                .into_iter()
                .map(|keep| if keep { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn tce_step_zero_keeps_everything() {
        let cfg = TceConfig {
            max_drop_rate: 0.5,
            anneal_steps: 10,
        };
        assert_eq!(tce_weights(&[0.5, 2.0, 0.1], 0, &cfg), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn tce_drops_top_losses_after_anneal() {
        let cfg = TceConfig {
            max_drop_rate: 0.5,
            anneal_steps: 1,
        };
        let w = tce_weights(&[0.1, 0.9, 0.5, 0.7], 5, &cfg);
        assert_eq!(w, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn tce_zero_max_rate_is_plain() {
        let cfg = TceConfig {
            max_drop_rate: 0.0,
            anneal_steps: 1,
        };
        assert_eq!(tce_weights(&[3.0, 1.0], 100, &cfg), vec![1.0, 1.0]);
    }

    #[test]
    fn tce_ties_keep_lower_slot() {
        let cfg = TceConfig {
            max_drop_rate: 0.25,
            anneal_steps: 1,
        };
        // One drop among equal losses: the higher index goes.
        let w = tce_weights(&[1.0, 1.0, 1.0, 1.0], 1, &cfg);
        assert_eq!(w, vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn tce_dropped_set_is_a_top_loss_set() {
        let mut rng = stream(60, &[]);
        let cfg = TceConfig {
            max_drop_rate: 0.4,
            anneal_steps: 3,
        };
        for step in 0..20 {
            let m = rng.random_range(1..40);
            let losses: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 3.0).collect();
            let w = tce_weights(&losses, step, &cfg);
            let rate = cfg.max_drop_rate * (step as f64 / cfg.anneal_steps as f64).min(1.0);
            let expect_drop = (rate * m as f64).ceil() as usize;
            let dropped: Vec<f64> = losses
                .iter()
                .zip(&w)
                .filter(|(_, &w)| w == 0.0)
                .map(|(l, _)| *l)
                .collect();
            assert_eq!(dropped.len(), expect_drop.min(m));
            let kept_max = losses
                .iter()
                .zip(&w)
                .filter(|(_, &w)| w == 1.0)
                .map(|(l, _)| *l)
                .fold(f64::NEG_INFINITY, f64::max);
            if let Some(dropped_min) = dropped.iter().cloned().reduce(f64::min) {
                assert!(kept_max <= dropped_min);
            }
        }
    }

    #[test]
    fn rce_gamma_zero_is_all_ones() {
        let w = rce_weights(&[1, 0, 1], &[0.9, 0.8, 0.1], &RceConfig { gamma: 0.0 });
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rce_weight_is_observed_probability_at_gamma_one() {
        let w = rce_weights(&[1, 0], &[0.9, 0.3], &RceConfig { gamma: 1.0 });
        assert!((w[0] - 0.9).abs() < 1e-15);
        assert!((w[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rce_weights_decrease_with_observed_probability() {
        let cfg = RceConfig { gamma: 2.0 };
        let probs = [0.9, 0.7, 0.5, 0.3, 0.1];
        let w = rce_weights(&[1; 5], &probs, &cfg);
        for pair in w.windows(2) {
            assert!(pair[0] > pair[1]);
        }
    }

    #[test]
    fn random_drop_counts_and_determinism() {
        let mut rng = stream(61, &[]);
        assert_eq!(random_drop(10, 0.0, &mut rng), vec![true; 10]);

        let mut rng = stream(62, &[]);
        let mask = random_drop(100, 0.02, &mut rng);
        assert_eq!(mask.iter().filter(|&&k| k).count(), 98);

        let a = random_drop(50, 0.3, &mut stream(63, &[]));
        let b = random_drop(50, 0.3, &mut stream(63, &[]));
        assert_eq!(a, b);
    }
}
