//! Error, balanced error, negative log likelihood, AUROC and train/test bias.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ensemble::PredictionSet;
use crate::error::{Error, Result};
use crate::math::log2;

/// Smallest probability any class keeps after the NLL squash.
pub const NLL_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub error: f64,
    pub balanced_error: f64,
    /// `Σ_j r_j s_j`: per-class recall weighted by train class proportion.
    pub weighted_recall: f64,
    pub nll_mean: f64,
    pub nll_sum: f64,
    pub auroc: f64,
    pub bias: Option<f64>,
}

impl MetricReport {
    /// All statistics of `preds`; `bias` uses the set's train estimate.
    pub fn compute(preds: &PredictionSet, train_proportions: &[f64]) -> Result<MetricReport> {
        let err = error(preds)?;
        let (balanced_error, weighted_recall) = balanced_error(preds, train_proportions)?;
        let (nll_sum, nll_mean) = neg_log_likelihood(preds)?;
        Ok(MetricReport {
            error: err,
            balanced_error,
            weighted_recall,
            nll_mean,
            nll_sum,
            auroc: multiclass_auroc(preds, train_proportions)?,
            bias: Some(bias(preds.train_estimate, err)),
        })
    }
}

fn non_empty(preds: &PredictionSet) -> Result<()> {
    if preds.records.is_empty() {
        Err(Error::InvalidArgument("no prediction records".into()))
    } else {
        Ok(())
    }
}

/// Proportion of incorrect predictions.
pub fn error(preds: &PredictionSet) -> Result<f64> {
    non_empty(preds)?;
    Ok(1.0 - preds.accuracy())
}

fn recalls(preds: &PredictionSet) -> Result<Vec<f64>> {
    let c = preds.class_count();
    let mut hits = vec![0usize; c];
    let mut totals = vec![0usize; c];
    for r in &preds.records {
        totals[r.true_class] += 1;
        if r.is_correct() {
            hits[r.true_class] += 1;
        }
    }
    if let Some(j) = totals.iter().position(|&t| t == 0) {
        return Err(Error::InvalidArgument(format!("class {j} absent from the predictions")));
    }
    Ok(hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t as f64).collect())
}

fn check_proportions(train_proportions: &[f64], c: usize) -> Result<()> {
    if train_proportions.len() != c {
        return Err(Error::DimensionMismatch { expected: c, found: train_proportions.len() });
    }
    let sum: f64 = train_proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || train_proportions.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidArgument("train proportions must be a distribution".into()));
    }
    Ok(())
}

/// `(1 - mean recall, Σ_j r_j s_j)` where `s_j` is the recall of class `j`
/// and `r_j` its train proportion.
pub fn balanced_error(preds: &PredictionSet, train_proportions: &[f64]) -> Result<(f64, f64)> {
    non_empty(preds)?;
    check_proportions(train_proportions, preds.class_count())?;
    let s = recalls(preds)?;
    let mean_recall = s.iter().sum::<f64>() / s.len() as f64;
    let weighted = s.iter().zip(train_proportions).map(|(s, r)| s * r).sum();
    Ok((1.0 - mean_recall, weighted))
}

/// `p'_j = 0.01 + (1 - 0.01 c) p_j`: every entry at least 0.01, sum kept.
pub fn squash(p: &[f64]) -> Result<Vec<f64>> {
    let c = p.len() as f64;
    if c * NLL_FLOOR > 1.0 {
        return Err(Error::InvalidArgument(format!("probability floor infeasible for {c} classes")));
    }
    Ok(p.iter().map(|v| NLL_FLOOR + (1.0 - NLL_FLOOR * c) * v).collect())
}

/// `(sum, mean)` of `-log2 p'(true class)` over the records.
pub fn neg_log_likelihood(preds: &PredictionSet) -> Result<(f64, f64)> {
    non_empty(preds)?;
    let mut sum = 0.0;
    for r in &preds.records {
        sum -= log2(squash(r.dist.as_slice())?[r.true_class]);
    }
    Ok((sum, sum / preds.records.len() as f64))
}

/// Corner points of an ROC curve, from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

/// Cumulative `(fp, tp)` counts plus the negative and positive totals.
type RocCounts = (Vec<(u64, u64)>, u64, u64);

/// Cumulative (false positive, true positive) counts after each distinct
/// score threshold, descending; starts at (0, 0).
fn roc_counts(scores: &[f64], labels: &[bool]) -> Result<RocCounts> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: labels.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC needs both positive and negative instances".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0u64, 0u64)];
    let (mut fp, mut tp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp, tp));
    }
    Ok((points, pos, neg))
}

/// ROC curve with tied scores as one threshold. Consecutive collinear points
/// are merged, so the curve is the list of its corners; a vertical run at
/// one false positive rate keeps only its highest true positive rate.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (counts, pos, neg) = roc_counts(scores, labels)?;
    let mut corners: Vec<(u64, u64)> = Vec::with_capacity(counts.len());
    for p in counts {
        while corners.len() >= 2 {
            let (a, b) = (corners[corners.len() - 2], corners[corners.len() - 1]);
            let cross = (b.0 as i128 - a.0 as i128) * (p.1 as i128 - b.1 as i128)
                - (b.1 as i128 - a.1 as i128) * (p.0 as i128 - b.0 as i128);
            if cross == 0 {
                corners.pop();
            } else {
                break;
            }
        }
        corners.push(p);
    }
    Ok(RocCurve {
        points: corners.into_iter().map(|(fp, tp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)).collect(),
    })
}

/// Area under the ROC curve (trapezoids over tied thresholds), which is the
/// probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn binary_auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (counts, pos, neg) = roc_counts(scores, labels)?;
    let twice_area: u128 = counts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) as u128 * (w[0].1 + w[1].1) as u128)
        .sum();
    Ok(twice_area as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Two classes: AUROC with the class of smaller train proportion as the
/// positive class. More classes: one-vs-rest AUROCs weighted by train
/// proportion.
pub fn multiclass_auroc(preds: &PredictionSet, train_proportions: &[f64]) -> Result<f64> {
    non_empty(preds)?;
    let c = preds.class_count();
    check_proportions(train_proportions, c)?;
    let one_vs_rest = |j: usize| {
        let scores: Vec<f64> = preds.records.iter().map(|r| r.dist.get(j)).collect();
        let labels: Vec<bool> = preds.records.iter().map(|r| r.true_class == j).collect();
        binary_auroc(&scores, &labels)
    };
    if c == 2 {
        let minority = if train_proportions[1] < train_proportions[0] { 1 } else { 0 };
        return one_vs_rest(minority);
    }
    let mut total = 0.0;
    for (j, r) in train_proportions.iter().enumerate() {
        total += r * one_vs_rest(j)?;
    }
    Ok(total)
}

/// Test error minus the error estimated on train; positive when the train
/// estimate was optimistic.
pub fn bias(train_estimate: f64, test_error: f64) -> f64 {
    test_error - (1.0 - train_estimate)
}
