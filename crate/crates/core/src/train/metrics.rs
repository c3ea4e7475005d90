//! Classification metrics.

use crate::error::{Error, Result};
use crate::model::bce;

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
///
/// Computed from average ranks in integer arithmetic, so the result equals
/// the pairwise count exactly.
///
/// ```
/// use tbsm::train::auc;
///
/// assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
/// assert_eq!(auc(&[0.3, 0.3, 0.3], &[1, 0, 1]).unwrap(), 0.5);
/// assert!(auc(&[0.2, 0.4], &[1, 1]).is_err());
/// ```
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (u2, pos, neg) = rank_sum(scores, labels)?;
    Ok(u2 as f64 / (2 * pos * neg) as f64)
}

/// `(2U, P, N)` where `U` is the Mann-Whitney statistic of the positives.
fn rank_sum(scores: &[f64], labels: &[u8]) -> Result<(u64, u64, u64)> {
    check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    // Sum over positives of twice their (1-based, tie-averaged) rank.
    let mut rank2 = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let group_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        rank2 += group_pos * (i as u64 + 1 + j as u64);
        i = j;
    }
    Ok((rank2 - pos * (pos + 1), pos, neg))
}

fn check(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape("metric", &[scores.len()], &[labels.len()]));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric(format!("score {i} is NaN")));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::UndefinedMetric(format!(
            "label {i} is {}",
            labels[i]
        )));
    }
    Ok(())
}

/// Fraction of points where `p > 0.5` agrees with the label.
pub fn accuracy(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| u8::from(s > 0.5) == l)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Mean clamped binary cross-entropy.
pub fn mean_bce(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("loss of an empty set".into()));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &l)| bce(p, l as f64))
        .sum();
    Ok(total / scores.len() as f64)
}
