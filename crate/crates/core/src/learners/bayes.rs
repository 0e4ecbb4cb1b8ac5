//! Gaussian naive Bayes.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{ln, softmax_in_place};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub variance_floor: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams { variance_floor: 1e-9 }
    }
}

impl NbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidParams("variance floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NbModel {
    log_prior: Vec<f64>,
    /// c x m
    mean: Vec<f64>,
    var: Vec<f64>,
    m: usize,
}

pub fn fit(params: &NbParams, data: &Dataset) -> NbModel {
    let (c, m) = (data.c(), data.m());
    let counts = data.class_counts();
    let mut mean = vec![0.0; c * m];
    let mut var = vec![0.0; c * m];
    for (row, &y) in data.rows().zip(data.labels()) {
        for (a, x) in row.iter().enumerate() {
            mean[y * m + a] += x;
        }
    }
    for j in 0..c {
        for a in 0..m {
            mean[j * m + a] /= counts[j] as f64;
        }
    }
    for (row, &y) in data.rows().zip(data.labels()) {
        for (a, x) in row.iter().enumerate() {
            let d = x - mean[y * m + a];
            var[y * m + a] += d * d;
        }
    }
    for j in 0..c {
        for a in 0..m {
            let v = var[j * m + a] / counts[j] as f64;
            var[j * m + a] = v.max(params.variance_floor);
        }
    }
    let n = data.n() as f64;
    NbModel {
        log_prior: counts.iter().map(|&k| ln(k as f64 / n)).collect(),
        mean,
        var,
        m,
    }
}

impl NbModel {
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let mut scores: Vec<f64> = self
            .log_prior
            .iter()
            .enumerate()
            .map(|(j, lp)| {
                let mut s = *lp;
                for (a, v) in x.iter().enumerate() {
                    let mu = self.mean[j * self.m + a];
                    let var = self.var[j * self.m + a];
                    s -= 0.5 * (ln(2.0 * core::f64::consts::PI * var) + (v - mu) * (v - mu) / var);
                }
                s
            })
            .collect();
        softmax_in_place(&mut scores);
        scores
    }
}
