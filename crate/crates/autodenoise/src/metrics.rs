//! Evaluation metrics: AUC (rank-based with tie averaging) and logloss,
//! plus the O(n^2) pairwise AUC used as the test oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::bce_per_instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// None when the evaluated split contains a single class.
    pub auc: Option<f64>,
    pub logloss: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl EvalReport {
    pub fn from_scores(labels: &[u8], scores: &[f64]) -> Result<Self> {
        if labels.is_empty() || labels.len() != scores.len() {
            return Err(Error::shape("labels/scores length mismatch or empty"));
        }
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        let n_neg = labels.len() - n_pos;
        let auc_value = match auc(labels, scores) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            auc: auc_value,
            logloss: logloss(labels, scores)?,
            n_pos,
            n_neg,
        })
    }
}

fn check_binary(labels: &[u8], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() || labels.is_empty() {
        return Err(Error::shape("labels/scores length mismatch or empty"));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(Error::NonFinite("auc scores"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    Ok((n_pos, n_neg))
}

/// Rank-based (Mann-Whitney) AUC with average ranks for tied scores.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = check_binary(labels, scores)?;
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = n_pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// Pairwise AUC oracle: wins count 1, ties count 0.5.
pub fn auc_bruteforce(labels: &[u8], scores: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = check_binary(labels, scores)?;
    let mut total = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            if scores[i] > scores[j] {
                total += 1.0;
            } else if scores[i] == scores[j] {
                total += 0.5;
            }
        }
    }
    Ok(total / (n_pos as f64 * n_neg as f64))
}

/// Mean clamped binary cross-entropy.
pub fn logloss(labels: &[u8], probabilities: &[f64]) -> Result<f64> {
    if labels.is_empty() || labels.len() != probabilities.len() {
        return Err(Error::shape(
            "labels/probabilities length mismatch or empty",
        ));
    }
    let sum: f64 = labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| bce_per_instance(y, p))
        .sum();
    Ok(sum / labels.len() as f64)
}
