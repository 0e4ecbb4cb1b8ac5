//! k-nearest neighbours on standardized attributes.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{sq_dist, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 1 }
    }
}

impl KnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("knn needs k >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    c: usize,
    m: usize,
    scaler: Standardizer,
    points: Vec<f64>,
    labels: Vec<usize>,
}

pub fn fit(params: &KnnParams, data: &Dataset) -> Result<KnnModel> {
    if params.k > data.n() {
        return Err(Error::InvalidParams(format!(
            "k = {} exceeds the {} training instances",
            params.k,
            data.n()
        )));
    }
    let scaler = Standardizer::fit(data.rows(), data.m());
    let mut points = Vec::with_capacity(data.values().len());
    for row in data.rows() {
        points.extend(scaler.transform(row));
    }
    Ok(KnnModel {
        k: params.k,
        c: data.c(),
        m: data.m(),
        scaler,
        points,
        labels: data.labels().to_vec(),
    })
}

impl KnnModel {
    /// Neighbour vote proportions; distance ties go to the lower training index.
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform(x);
        let mut dists: Vec<(f64, usize)> = self
            .points
            .chunks_exact(self.m)
            .enumerate()
            .map(|(i, p)| (sq_dist(p, &z), i))
            .collect();
        let by_distance_then_index =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dists.len() {
            dists.select_nth_unstable_by(self.k - 1, by_distance_then_index);
        }
        let mut votes = alloc::vec![0.0; self.c];
        for &(_, i) in &dists[..self.k] {
            votes[self.labels[i]] += 1.0;
        }
        for v in &mut votes {
            *v /= self.k as f64;
        }
        votes
    }
}
