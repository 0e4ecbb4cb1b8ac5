//! Kernel support vector machine.
//!
//! Binary C-SVC problems are solved in the dual by sequential minimal
//! optimization with second-order working set selection over a precomputed
//! kernel matrix. Multiclass problems are split one-vs-one; each pairwise
//! machine gets a Platt map fitted on its training decision values, and the
//! pairwise probabilities are coupled into one distribution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::calibration::{calibrate_scores, PlattScaling};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{dot, exp, powf, sq_dist, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    /// `(x . y + coef0)^degree`
    Polynomial { degree: u32, coef0: f64 },
    /// `exp(-gamma |x - y|^2)`
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, y),
            Kernel::Polynomial { degree, coef0 } => powf(dot(x, y) + coef0, degree as f64),
            Kernel::Rbf { gamma } => exp(-gamma * sq_dist(x, y)),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => f.write_str("linear"),
            Kernel::Polynomial { degree, coef0 } => write!(f, "poly(degree={degree} coef0={coef0})"),
            Kernel::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { kernel: Kernel::Linear, c: 1.0, tolerance: 1e-3, max_iterations: 1_000_000 }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!("svm C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParams("svm tolerance must be positive".into()));
        }
        match self.kernel {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InvalidParams(format!("rbf gamma must be positive, got {gamma}")))
            }
            Kernel::Polynomial { degree: 0, .. } => {
                Err(Error::InvalidParams("polynomial degree must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One pairwise machine: class `pos` (label +1) against class `neg`.
#[derive(Debug, Clone)]
struct PairMachine {
    pos: usize,
    neg: usize,
    /// `(training index, y_i * alpha_i)` for the support vectors.
    coef: Vec<(usize, f64)>,
    rho: f64,
    platt: PlattScaling,
}

impl PairMachine {
    fn decision(&self, kx: &[f64]) -> f64 {
        self.coef.iter().map(|&(i, a)| a * kx[i]).sum::<f64>() - self.rho
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    scaler: Standardizer,
    kernel: Kernel,
    /// Standardized training rows, row-major.
    rows: Vec<f64>,
    m: usize,
    c: usize,
    /// Training rows referenced by any machine.
    used: Vec<usize>,
    machines: Vec<PairMachine>,
}

pub fn fit(params: &SvmParams, data: &Dataset) -> Result<SvmModel> {
    let (n, m, c) = (data.n(), data.m(), data.c());
    let scaler = Standardizer::fit(data.rows(), m);
    let mut rows = vec![0.0; n * m];
    for i in 0..n {
        scaler.transform_into(data.row(i), &mut rows[i * m..(i + 1) * m]);
    }
    let row = |i: usize| &rows[i * m..(i + 1) * m];
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = params.kernel.eval(row(i), row(j));
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let by_class = data.class_indices();
    let mut machines = Vec::with_capacity(c * (c - 1) / 2);
    for s in 0..c {
        for t in s + 1..c {
            let idx: Vec<usize> = by_class[s].iter().chain(&by_class[t]).copied().collect();
            let y: Vec<f64> = idx.iter().map(|&i| if data.label(i) == s { 1.0 } else { -1.0 }).collect();
            let sub = Submatrix { gram: &gram, n, idx: &idx };
            let (alpha, rho) = solve(&sub, &y, params.c, params.tolerance, params.max_iterations);
            let coef: Vec<(usize, f64)> = idx
                .iter()
                .zip(&alpha)
                .zip(&y)
                .filter(|((_, a), _)| **a > 0.0)
                .map(|((&i, a), yi)| (i, a * yi))
                .collect();
            let values: Vec<f64> = idx
                .iter()
                .map(|&i| coef.iter().map(|&(j, a)| a * gram[i * n + j]).sum::<f64>() - rho)
                .collect();
            let labels: Vec<bool> = y.iter().map(|&v| v > 0.0).collect();
            let platt = calibrate_scores(&values, &labels)?;
            machines.push(PairMachine { pos: s, neg: t, coef, rho, platt });
        }
    }
    let mut used: Vec<usize> = machines.iter().flat_map(|mc| mc.coef.iter().map(|&(i, _)| i)).collect();
    used.sort_unstable();
    used.dedup();
    Ok(SvmModel { scaler, kernel: params.kernel, rows, m, c, used, machines })
}

impl SvmModel {
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform(x);
        let n = self.rows.len() / self.m;
        let mut kx = vec![0.0; n];
        for &i in &self.used {
            kx[i] = self.kernel.eval(&z, &self.rows[i * self.m..(i + 1) * self.m]);
        }
        let mut r = vec![vec![0.0; self.c]; self.c];
        for mc in &self.machines {
            let p = mc.platt.map(mc.decision(&kx)).clamp(1e-7, 1.0 - 1e-7);
            r[mc.pos][mc.neg] = p;
            r[mc.neg][mc.pos] = 1.0 - p;
        }
        couple(&r)
    }

    pub fn support_vector_count(&self) -> usize {
        self.used.len()
    }
}

/// Pairwise coupling of `r[i][j] = P(i | i or j)` into class probabilities
/// (the second method of Wu, Lin and Weng).
pub(crate) fn couple(r: &[Vec<f64>]) -> Vec<f64> {
    let k = r.len();
    if k == 2 {
        return vec![r[0][1], r[1][0]];
    }
    let mut q = vec![vec![0.0; k]; k];
    for t in 0..k {
        for j in 0..k {
            if j != t {
                q[t][t] += r[j][t] * r[j][t];
                q[t][j] = -r[j][t] * r[t][j];
            }
        }
    }
    let mut p = vec![1.0 / k as f64; k];
    let mut qp = vec![0.0; k];
    let eps = 0.005 / k as f64;
    for _ in 0..k.max(100) {
        let mut pqp = 0.0;
        for t in 0..k {
            qp[t] = (0..k).map(|j| q[t][j] * p[j]).sum();
            pqp += p[t] * qp[t];
        }
        if qp.iter().all(|v| (v - pqp).abs() < eps) {
            break;
        }
        for t in 0..k {
            let diff = (-qp[t] + pqp) / q[t][t];
            p[t] += diff;
            pqp = (pqp + diff * (diff * q[t][t] + 2.0 * qp[t])) / (1.0 + diff) / (1.0 + diff);
            for j in 0..k {
                qp[j] = (qp[j] + diff * q[t][j]) / (1.0 + diff);
                p[j] /= 1.0 + diff;
            }
        }
    }
    p
}

struct Submatrix<'a> {
    gram: &'a [f64],
    n: usize,
    idx: &'a [usize],
}

impl Submatrix<'_> {
    fn k(&self, a: usize, b: usize) -> f64 {
        self.gram[self.idx[a] * self.n + self.idx[b]]
    }
}

/// Dual C-SVC by SMO with second-order working set selection.
/// Returns `(alpha, rho)`; the decision function is
/// `sum_i y_i alpha_i K(x_i, x) - rho`.
fn solve(q: &Submatrix<'_>, y: &[f64], c: f64, eps: f64, max_iterations: usize) -> (Vec<f64>, f64) {
    const TAU: f64 = 1e-12;
    let l = y.len();
    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let diag: Vec<f64> = (0..l).map(|i| q.k(i, i)).collect();
    let qij = |i: usize, j: usize| y[i] * y[j] * q.k(i, j);
    let up = |a: f64, yi: f64| if yi > 0.0 { a < c } else { a > 0.0 };
    let low = |a: f64, yi: f64| if yi > 0.0 { a > 0.0 } else { a < c };

    for _ in 0..max_iterations {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            if up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i_sel != usize::MAX {
            for t in 0..l {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                gmax2 = gmax2.max(y[t] * grad[t]);
                let b = gmax + y[t] * grad[t];
                if b > 0.0 {
                    let a = diag[i_sel] + diag[t] - 2.0 * y[i_sel] * y[t] * qij(i_sel, t);
                    let a = if a > 0.0 { a } else { TAU };
                    if -(b * b) / a <= obj_min {
                        obj_min = -(b * b) / a;
                        j_sel = t;
                    }
                }
            }
        }
        if gmax + gmax2 < eps || j_sel == usize::MAX {
            break;
        }
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = qij(i, j);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..l {
            grad[t] += qij(t, i) * di + qij(t, j) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    (alpha, rho)
}
