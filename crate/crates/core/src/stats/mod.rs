//! Comparing classifiers over resamples and over many datasets.
//!
//! Pairwise tests (paired t, Wilcoxon signed rank), the Friedman omnibus test
//! with the Iman-Davenport correction, Holm's step-down procedure, clique
//! formation for critical difference diagrams and the Texas sharpshooter
//! contingency counts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{mean, sample_sd, sqrt};

pub mod special;

use special::{chi_square_sf, f_sf, normal_sf, t_two_sided};

/// Sample sizes up to this use the exact signed-rank distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Scores of several classifiers over several datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsMatrix {
    pub dataset_names: Vec<String>,
    pub classifier_names: Vec<String>,
    /// Row-major, one row per dataset.
    pub scores: Vec<f64>,
    pub higher_is_better: bool,
}

impl ResultsMatrix {
    pub fn new(
        dataset_names: Vec<String>,
        classifier_names: Vec<String>,
        scores: Vec<f64>,
        higher_is_better: bool,
    ) -> Result<Self> {
        if scores.len() != dataset_names.len() * classifier_names.len() {
            return Err(Error::DimensionMismatch {
                expected: dataset_names.len() * classifier_names.len(),
                found: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("results matrix has missing or non-finite cells".into()));
        }
        Ok(ResultsMatrix { dataset_names, classifier_names, scores, higher_is_better })
    }

    pub fn from_rows(rows: &[Vec<f64>], higher_is_better: bool) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("ragged results matrix".into()));
        }
        ResultsMatrix::new(
            (0..rows.len()).map(|i| format!("d{i}")).collect(),
            (0..k).map(|j| format!("c{j}")).collect(),
            rows.concat(),
            higher_is_better,
        )
    }

    pub fn datasets(&self) -> usize {
        self.dataset_names.len()
    }

    pub fn classifiers(&self) -> usize {
        self.classifier_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.classifiers();
        &self.scores[i * k..(i + 1) * k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.datasets()).map(|i| self.row(i)[j]).collect()
    }

    /// Per-dataset ranks (1 = best), tied scores sharing their average rank.
    pub fn ranks(&self) -> Vec<Vec<f64>> {
        (0..self.datasets())
            .map(|i| {
                let row = self.row(i);
                let oriented: Vec<f64> = if self.higher_is_better {
                    row.iter().map(|v| -v).collect()
                } else {
                    row.to_vec()
                };
                average_ranks(&oriented)
            })
            .collect()
    }

    pub fn average_ranks(&self) -> Vec<f64> {
        let ranks = self.ranks();
        let n = self.datasets() as f64;
        (0..self.classifiers())
            .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

/// Ranks of `values` in ascending order (1-based), ties averaged.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn paired_differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Two-sided paired t-test over per-fold differences `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    let d = paired_differences(a, b)?;
    if d.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let sd = sample_sd(&d);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let t = mean(&d) / (sd / sqrt(d.len() as f64));
    Ok(t_two_sided(t, d.len() as f64 - 1.0).min(1.0))
}

/// Signed-rank statistic of the nonzero differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRanks {
    /// Doubled ranks of |d| (integers even with averaged ties).
    pub doubled_ranks: Vec<u32>,
    pub positive: Vec<bool>,
}

impl SignedRanks {
    pub fn new(a: &[f64], b: &[f64]) -> Result<Self> {
        let d: Vec<f64> = paired_differences(a, b)?.into_iter().filter(|v| *v != 0.0).collect();
        if d.is_empty() {
            return Err(Error::Degenerate("all paired differences are zero".into()));
        }
        let magnitudes: Vec<f64> = d.iter().map(|v| v.abs()).collect();
        let doubled_ranks = average_ranks(&magnitudes).iter().map(|r| (2.0 * r) as u32).collect();
        Ok(SignedRanks { doubled_ranks, positive: d.iter().map(|v| *v > 0.0).collect() })
    }

    pub fn n(&self) -> usize {
        self.doubled_ranks.len()
    }

    /// Sum of the positive differences' ranks.
    pub fn w_plus(&self) -> f64 {
        self.doubled_w_plus() as f64 / 2.0
    }

    fn doubled_w_plus(&self) -> u32 {
        self.doubled_ranks.iter().zip(&self.positive).filter(|(_, &p)| p).map(|(r, _)| r).sum()
    }
}

/// Exact two-sided p-value from the null distribution of W+ over all 2^n
/// sign assignments, computed by subset-sum counting on doubled ranks.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    let sr = SignedRanks::new(a, b)?;
    let total: u32 = sr.doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in &sr.doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = sr.doubled_w_plus() as usize;
    let all = libm::ldexp(1.0, sr.n() as i32);
    let lower: u64 = counts[..=w].iter().sum();
    let upper: u64 = counts[w..].iter().sum();
    Ok((2.0 * lower.min(upper) as f64 / all).min(1.0))
}

/// Normal approximation with tie and continuity corrections.
pub fn wilcoxon_normal(a: &[f64], b: &[f64]) -> Result<f64> {
    let sr = SignedRanks::new(a, b)?;
    let n = sr.n() as f64;
    let mu = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = sr.doubled_ranks.clone();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if !(var > 0.0) {
        return Ok(1.0);
    }
    let z = ((sr.w_plus() - mu).abs() - 0.5).max(0.0) / sqrt(var);
    Ok((2.0 * normal_sf(z)).min(1.0))
}

/// Two-sided Wilcoxon signed-rank test of `a` against `b`. Zero differences
/// are discarded; exact for up to 25 remaining pairs, normal approximation
/// beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64> {
    let sr = SignedRanks::new(a, b)?;
    if sr.n() <= WILCOXON_EXACT_MAX_N {
        wilcoxon_exact(a, b)
    } else {
        wilcoxon_normal(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub average_ranks: Vec<f64>,
    pub chi_square: f64,
    pub chi_square_p: f64,
    pub iman_davenport: f64,
    pub iman_davenport_p: f64,
}

pub fn friedman_test(m: &ResultsMatrix) -> Result<FriedmanResult> {
    let (n, k) = (m.datasets(), m.classifiers());
    if n < 2 || k < 2 {
        return Err(Error::InvalidArgument(format!(
            "Friedman test needs >= 2 datasets and >= 2 classifiers, got {n} x {k}"
        )));
    }
    let avg = m.average_ranks();
    let (nf, kf) = (n as f64, k as f64);
    let centre = (kf + 1.0) / 2.0;
    let spread: f64 = avg.iter().map(|r| (r - centre) * (r - centre)).sum();
    let chi_square = 12.0 * nf / (kf * (kf + 1.0)) * spread;
    let denominator = nf * (kf - 1.0) - chi_square;
    let iman_davenport = if denominator > 1e-12 {
        (nf - 1.0) * chi_square / denominator
    } else {
        f64::INFINITY
    };
    Ok(FriedmanResult {
        chi_square_p: chi_square_sf(chi_square, kf - 1.0).min(1.0),
        iman_davenport_p: f_sf(iman_davenport, kf - 1.0, (kf - 1.0) * (nf - 1.0)).min(1.0),
        average_ranks: avg,
        chi_square,
        iman_davenport,
    })
}

/// Holm step-down: sort ascending, reject while `p_(i) <= alpha / (m - i + 1)`.
/// Flags come back in input order.
pub fn holm_correction(pvalues: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut reject = vec![false; m];
    for (i, &idx) in order.iter().enumerate() {
        if pvalues[idx] <= alpha / (m - i) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    reject
}

/// Ranks and cliques of a critical difference diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdDiagramData {
    pub classifier_names: Vec<String>,
    pub average_ranks: Vec<f64>,
    /// Cliques of two or more classifiers, each listed in rank order.
    pub cliques: Vec<Vec<usize>>,
    pub alpha: f64,
}

/// Holm-corrected cliques over a symmetric matrix of pairwise p-values.
///
/// Classifiers are ordered by average rank; a clique is a maximal contiguous
/// run of that order inside which no pair was rejected.
pub fn form_cliques(average_ranks: &[f64], pairwise_p: &[Vec<f64>], alpha: f64) -> Result<CdDiagramData> {
    let k = average_ranks.len();
    if pairwise_p.len() != k || pairwise_p.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: pairwise_p.len() });
    }
    let mut pairs = Vec::new();
    let mut pvalues = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if (pairwise_p[i][j] - pairwise_p[j][i]).abs() > 1e-12 {
                return Err(Error::InvalidArgument("pairwise p-value matrix is not symmetric".into()));
            }
            pairs.push((i, j));
            pvalues.push(pairwise_p[i][j]);
        }
    }
    let rejected_flags = holm_correction(&pvalues, alpha);
    let mut rejected = vec![vec![false; k]; k];
    for (&(i, j), &r) in pairs.iter().zip(&rejected_flags) {
        rejected[i][j] = r;
        rejected[j][i] = r;
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| average_ranks[a].total_cmp(&average_ranks[b]));
    let mut cliques = Vec::new();
    let mut last_end = 0usize;
    for start in 0..k {
        let mut end = start;
        while end + 1 < k && (start..=end).all(|s| !rejected[order[s]][order[end + 1]]) {
            end += 1;
        }
        // a run ending where the previous one ended is contained in it
        if end > start && (start == 0 || end > last_end) {
            cliques.push(order[start..=end].to_vec());
        }
        last_end = last_end.max(end);
    }
    Ok(CdDiagramData {
        classifier_names: (0..k).map(|i| format!("c{i}")).collect(),
        average_ranks: average_ranks.to_vec(),
        cliques,
        alpha,
    })
}

/// Pairwise Wilcoxon p-values between the columns of `m`; pairs whose
/// differences are all zero get p = 1.
pub fn pairwise_wilcoxon(m: &ResultsMatrix) -> Vec<Vec<f64>> {
    let k = m.classifiers();
    let columns: Vec<Vec<f64>> = (0..k).map(|j| m.column(j)).collect();
    let mut p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = wilcoxon_signed_rank(&columns[i], &columns[j]).unwrap_or(1.0);
            p[i][j] = v;
            p[j][i] = v;
        }
    }
    p
}

/// Friedman ranks plus Holm-corrected Wilcoxon cliques for a results matrix.
pub fn cd_diagram(m: &ResultsMatrix, alpha: f64) -> Result<CdDiagramData> {
    let p = pairwise_wilcoxon(m);
    let mut cd = form_cliques(&m.average_ranks(), &p, alpha)?;
    cd.classifier_names = m.classifier_names.clone();
    Ok(cd)
}

/// Contingency counts of train-ratio against test-ratio outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sharpshooter {
    /// `(train ratio, test ratio)` per fold.
    pub points: Vec<(f64, f64)>,
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    /// Folds where either ratio is exactly one.
    pub ties: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn texas_sharpshooter(
    train_a: &[f64],
    train_b: &[f64],
    test_a: &[f64],
    test_b: &[f64],
) -> Result<Sharpshooter> {
    let n = train_a.len();
    for other in [train_b.len(), test_a.len(), test_b.len()] {
        if other != n {
            return Err(Error::DimensionMismatch { expected: n, found: other });
        }
    }
    let mut out = Sharpshooter {
        points: Vec::with_capacity(n),
        true_positive: 0,
        true_negative: 0,
        false_positive: 0,
        false_negative: 0,
        ties: 0,
        sensitivity: None,
        specificity: None,
    };
    for i in 0..n {
        if train_b[i] == 0.0 || test_b[i] == 0.0 {
            return Err(Error::Degenerate(format!("zero accuracy denominator at fold {i}")));
        }
        let train = train_a[i] / train_b[i];
        let test = test_a[i] / test_b[i];
        out.points.push((train, test));
        match (train.partial_cmp(&1.0), test.partial_cmp(&1.0)) {
            (Some(core::cmp::Ordering::Greater), Some(core::cmp::Ordering::Greater)) => out.true_positive += 1,
            (Some(core::cmp::Ordering::Less), Some(core::cmp::Ordering::Less)) => out.true_negative += 1,
            (Some(core::cmp::Ordering::Greater), Some(core::cmp::Ordering::Less)) => out.false_positive += 1,
            (Some(core::cmp::Ordering::Less), Some(core::cmp::Ordering::Greater)) => out.false_negative += 1,
            _ => out.ties += 1,
        }
    }
    let ratio = |num: usize, other: usize| {
        (num + other > 0).then(|| num as f64 / (num + other) as f64)
    };
    out.sensitivity = ratio(out.true_positive, out.false_negative);
    out.specificity = ratio(out.true_negative, out.false_positive);
    Ok(out)
}
