//! Scalar and vector primitives: stable softmax/sigmoid and clamped
//! binary cross-entropy.

use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before any
/// logarithm so a single confident mistake cannot produce an infinite loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Numerically stable softmax (max-subtraction). Order-preserving.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax of empty vector"));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("softmax"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// In-place softmax over a slice; caller guarantees finite input.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Logistic function, stable on both tails.
pub fn sigmoid(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite("sigmoid"));
    }
    Ok(sigmoid_raw(z))
}

#[inline]
pub(crate) fn sigmoid_raw(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one instance on the clamped probability.
pub fn bce_per_instance(label: u8, p: f64) -> f64 {
    debug_assert!(label <= 1);
    let p = clamp_prob(p);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// d(bce)/d(logit) for `p = sigmoid(logit)`, honoring the clamp: outside the
/// clamp band the loss is constant in `p`, so the gradient is exactly zero.
#[inline]
pub(crate) fn bce_logit_grad(label: u8, p: f64) -> f64 {
    if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
        0.0
    } else {
        p - f64::from(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_symmetry_and_closed_form() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);

        let p = softmax(&[2.0_f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] < 1e-12);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
        assert!(softmax(&[]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in proptest::collection::vec(-50.0_f64..50.0, 1..8),
            shift in -100.0_f64..100.0,
        ) {
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);

            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }

            // Order preserving: argmax carries over.
            let argmax_in = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let argmax_out = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            prop_assert_eq!(argmax_in, argmax_out);
        }
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0).unwrap(), 0.5);
        // At z = 50 the true value is 1 - 2e-22; f64 rounds that to 1.0
        // exactly. The point is no overflow and eps below 1e-20.
        let near_one = sigmoid(50.0).unwrap();
        assert!(near_one.is_finite() && near_one <= 1.0 && 1.0 - near_one < 1e-20);
        assert!(sigmoid(25.0).unwrap() < 1.0);
        assert!(sigmoid(f64::NAN).is_err());
        for &z in &[-7.3, -0.5, 0.1, 3.0, 20.0] {
            let a = sigmoid(z).unwrap();
            let b = sigmoid(-z).unwrap();
            assert!((a + b - 1.0).abs() < 1e-15, "symmetry failed at {z}");
        }
    }

    #[test]
    fn bce_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_per_instance(1, 0.5) - ln2).abs() < 1e-12);
        assert!((bce_per_instance(0, 0.5) - ln2).abs() < 1e-12);
        // Clamped at the floor: -ln(1e-7), computed directly as the oracle.
        let expected = -(1e-7_f64).ln();
        assert!((bce_per_instance(1, 0.0) - expected).abs() < 1e-9);
        assert!((expected - 16.118_095_650_958_32).abs() < 1e-10);
        // Perfect prediction clamped at the ceiling: loss of about 1e-7.
        let tiny = bce_per_instance(1, 1.0);
        assert!(tiny > 0.0 && (tiny - 1e-7).abs() < 1e-11);
    }

    #[test]
    fn bce_logit_grad_is_zero_in_clamp_band() {
        assert_eq!(bce_logit_grad(1, 1e-8), 0.0);
        assert_eq!(bce_logit_grad(0, 1.0 - 1e-8), 0.0);
        assert!((bce_logit_grad(1, 0.3) - (0.3 - 1.0)).abs() < 1e-15);
    }
}
