//! Platt scaling of raw decision values into probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, ln};

/// `P(positive | s) = 1 / (1 + exp(a * s + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn map(&self, score: f64) -> f64 {
        let f = self.a * score + self.b;
        if f >= 0.0 {
            let e = exp(-f);
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + exp(f))
        }
    }

    /// Score mapped to exactly one half.
    pub fn midpoint(&self) -> Option<f64> {
        (self.a != 0.0).then(|| -self.b / self.a)
    }
}

/// Fits a one-dimensional logistic map from `scores` to binary `labels`
/// (`true` = positive) by Newton's method with backtracking on the
/// regularized targets `(N+ + 1)/(N+ + 2)` and `1/(N- + 2)`.
pub fn calibrate_scores(scores: &[f64], labels: &[bool]) -> Result<PlattScaling> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), found: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let negatives = labels.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return Err(Error::Degenerate("calibration needs both labels".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite calibration score".into()));
    }
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-5;

    let hi = (positives + 1.0) / (positives + 2.0);
    let lo = 1.0 / (negatives + 2.0);
    let targets: alloc::vec::Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(s, t)| {
                let f = s * a + b;
                if f >= 0.0 {
                    t * f + ln(1.0 + exp(-f))
                } else {
                    (t - 1.0) * f + ln(1.0 + exp(f))
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ln((negatives + 1.0) / (positives + 1.0));
    let mut fval = objective(a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (s, t) in scores.iter().zip(&targets) {
            let f = s * a + b;
            let (p, q) = if f >= 0.0 {
                let e = exp(-f);
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = exp(f);
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(PlattScaling { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores_give_increasing_map() {
        let scores = [-3.0, -2.0, -1.5, 1.0, 2.0, 2.5];
        let labels = [false, false, false, true, true, true];
        let p = calibrate_scores(&scores, &labels).unwrap();
        assert!(p.a < 0.0);
        let mut last = 0.0;
        for s in [-5.0, -1.0, 0.0, 0.5, 3.0, 10.0] {
            let v = p.map(s);
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn midpoint_maps_to_one_half() {
        let p = calibrate_scores(&[-2.0, -0.5, 0.1, 0.3, 1.0, 2.0], &[false, true, false, true, true, true]).unwrap();
        assert!((p.map(p.midpoint().unwrap()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_data_gives_complementary_probabilities() {
        let p = calibrate_scores(&[-1.0, -1.0, 1.0, 1.0], &[false, false, true, true]).unwrap();
        assert!((p.map(-1.0) + p.map(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_label_is_rejected() {
        assert!(matches!(calibrate_scores(&[1.0, 2.0], &[true, true]), Err(Error::Degenerate(_))));
    }
}
