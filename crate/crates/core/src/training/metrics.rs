//! Ranking and classification metrics.

use crate::error::{Error, Result};

/// Exact ROC AUC (Mann–Whitney): `(concordant + ½·tied) / (positives · negatives)`
/// over all positive/negative pairs, in `O(N log N)`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (num, den) = auc_counts(scores, labels)?;
    Ok(num as f64 / den as f64)
}

/// Returns `(2·concordant + tied, 2·P·N)` as exact integers.
pub fn auc_counts(scores: &[f64], labels: &[f64]) -> Result<(u128, u128)> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative label".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut concordant, mut tied, mut neg_below) = (0u128, 0u128, 0u128);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        let group_pos = idx[i..j].iter().filter(|&&k| labels[k] == 1.0).count() as u128;
        let group_neg = (j - i) as u128 - group_pos;
        concordant += group_pos * neg_below;
        tied += group_pos * group_neg;
        neg_below += group_neg;
        i = j;
    }
    Ok((2 * concordant + tied, 2 * pos * neg))
}

/// Fraction of predictions on the right side of `threshold`.
pub fn accuracy(scores: &[f64], labels: &[f64], threshold: f64) -> f64 {
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= threshold) == (y == 1.0))
        .count();
    hits as f64 / scores.len().max(1) as f64
}

/// Accuracy of always predicting the more frequent label.
pub fn majority_baseline(labels: &[f64]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let n = labels.len().max(1) as f64;
    (pos / n).max(1.0 - pos / n)
}
