//! Multinomial logistic regression fitted by gradient descent with a ridge
//! penalty and a backtracking step size.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{dot, softmax_in_place, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub ridge: f64,
    pub max_iterations: usize,
    /// Stop once the loss changes by less than this between iterations.
    pub tolerance: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { ridge: 1e-8, max_iterations: 500, tolerance: 1e-10 }
    }
}

impl LogisticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !(self.tolerance >= 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidParams(
                "logistic needs ridge >= 0, tolerance >= 0, max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LogisticModel {
    scaler: Standardizer,
    /// c rows of (m + 1) coefficients, bias last.
    coef: Vec<f64>,
    c: usize,
    m: usize,
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) iterations: usize,
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [usize],
    n: usize,
    m: usize,
    c: usize,
    ridge: f64,
}

impl Problem<'_> {
    fn width(&self) -> usize {
        self.m + 1
    }

    /// Mean cross-entropy plus ridge; fills `grad` when given.
    fn evaluate(&self, w: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let width = self.width();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut loss = 0.0;
        let mut z = vec![0.0; self.c];
        for i in 0..self.n {
            let xi = &self.x[i * self.m..(i + 1) * self.m];
            for (j, zj) in z.iter_mut().enumerate() {
                let row = &w[j * width..(j + 1) * width];
                *zj = dot(&row[..self.m], xi) + row[self.m];
            }
            let raw_true = z[self.y[i]];
            let lse = softmax_in_place(&mut z);
            loss += lse - raw_true;
            if let Some(g) = grad.as_deref_mut() {
                for (j, pj) in z.iter().enumerate() {
                    let r = pj - if j == self.y[i] { 1.0 } else { 0.0 };
                    let grow = &mut g[j * width..(j + 1) * width];
                    for (ga, xa) in grow[..self.m].iter_mut().zip(xi) {
                        *ga += r * xa;
                    }
                    grow[self.m] += r;
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        let mut penalty = 0.0;
        for j in 0..self.c {
            for a in 0..self.m {
                penalty += w[j * width + a] * w[j * width + a];
            }
        }
        if let Some(g) = grad {
            for j in 0..self.c {
                for a in 0..width {
                    g[j * width + a] *= inv_n;
                    if a < self.m {
                        g[j * width + a] += 2.0 * self.ridge * w[j * width + a];
                    }
                }
            }
        }
        loss * inv_n + self.ridge * penalty
    }
}

pub fn fit(params: &LogisticParams, data: &Dataset) -> LogisticModel {
    let (n, m, c) = (data.n(), data.m(), data.c());
    let scaler = Standardizer::fit(data.rows(), m);
    let mut x = vec![0.0; n * m];
    for (i, row) in data.rows().enumerate() {
        scaler.transform_into(row, &mut x[i * m..(i + 1) * m]);
    }
    let problem = Problem { x: &x, y: data.labels(), n, m, c, ridge: params.ridge };

    let dim = c * (m + 1);
    let mut w = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut loss = problem.evaluate(&w, Some(&mut grad));
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 {
            break;
        }
        // Armijo backtracking
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, wv), g) in trial.iter_mut().zip(&w).zip(&grad) {
                *t = wv - step * g;
            }
            let candidate = problem.evaluate(&trial, None);
            if candidate.is_finite() && candidate <= loss - 1e-4 * step * gnorm2 {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        let Some(new_loss) = accepted else { break };
        core::mem::swap(&mut w, &mut trial);
        let change = loss - new_loss;
        loss = problem.evaluate(&w, Some(&mut grad));
        step *= 1.5;
        if change.abs() < params.tolerance {
            break;
        }
    }
    LogisticModel { scaler, coef: w, c, m, iterations }
}

impl LogisticModel {
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform(x);
        let width = self.m + 1;
        let mut scores: Vec<f64> = (0..self.c)
            .map(|j| {
                let row = &self.coef[j * width..(j + 1) * width];
                dot(&row[..self.m], &z) + row[self.m]
            })
            .collect();
        softmax_in_place(&mut scores);
        scores
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testutil::{blobs, training_accuracy};
    use crate::learners::{train, ClassifierSpec, Fitted};

    #[test]
    fn separates_linear_blobs() {
        let d = blobs(30, 3, 2, 4.0, 8);
        let model = train(&ClassifierSpec::logistic(0), &d).unwrap();
        assert!(training_accuracy(&model, &d) > 0.95);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = blobs(6, 3, 2, 1.0, 3);
        let x: Vec<f64> = d.values().to_vec();
        let p = Problem { x: &x, y: d.labels(), n: d.n(), m: 2, c: 3, ridge: 0.01 };
        let w: Vec<f64> = (0..9).map(|i| 0.1 * i as f64 - 0.3).collect();
        let mut g = vec![0.0; 9];
        p.evaluate(&w, Some(&mut g));
        for k in 0..9 {
            let h = 1e-6;
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (p.evaluate(&wp, None) - p.evaluate(&wm, None)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6, "coordinate {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn separable_data_stops_at_iteration_cap() {
        let d = blobs(10, 2, 1, 50.0, 1);
        let params = LogisticParams { max_iterations: 7, ..Default::default() };
        let spec = ClassifierSpec::new(crate::learners::Params::Logistic(params), 0).unwrap();
        let model = train(&spec, &d).unwrap();
        match model.fitted() {
            Fitted::Logistic(m) => assert!(m.iterations <= 7),
            _ => unreachable!(),
        }
        assert_eq!(training_accuracy(&model, &d), 1.0);
    }
}
