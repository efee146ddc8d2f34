//! Central finite differences, used as the independent gradient oracle.

use crate::error::{Error, Result};

/// Gradient of `f` at `x` by central differences with step `h`.
///
/// `f` must be deterministic: callers that check stochastic layers freeze
/// the randomness (same seed per evaluation) before calling this.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite_difference_gradient"));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative error between an analytic and a numeric derivative, with an
/// absolute floor so near-zero gradients compare sanely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / scale
}
