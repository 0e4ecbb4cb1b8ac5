//! Random forest of unpruned information-gain trees.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{self, SplitCriterion, TreeModel, TreeParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::rng::{child_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// Attributes tried per split; `None` is `floor(sqrt(m))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { trees: 500, features_per_split: None, bootstrap: true }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::InvalidParams("forest needs at least one tree".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidParams("features_per_split must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    c: usize,
}

pub fn fit(params: &ForestParams, data: &Dataset, seed: u64) -> Result<ForestModel> {
    let (n, m) = (data.n(), data.m());
    let features = params
        .features_per_split
        .unwrap_or_else(|| (sqrt(m as f64) as usize).max(1))
        .min(m);
    let tree_params = TreeParams {
        criterion: SplitCriterion::InfoGain,
        max_features: Some(features),
        laplace: false,
        ..TreeParams::unpruned()
    };
    let trees = (0..params.trees)
        .map(|t| {
            let mut rng = rng_from_seed(child_seed(seed, t as u64));
            let indices = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            tree::build(&tree_params, data, indices, &mut rng)
        })
        .collect();
    Ok(ForestModel { trees, c: data.c() })
}

impl ForestModel {
    /// Proportion of trees voting for each class.
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.c];
        for t in &self.trees {
            votes[t.vote(x)] += 1.0;
        }
        let total = self.trees.len() as f64;
        votes.iter().map(|v| v / total).collect()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{train, ClassifierSpec, Params};
    use super::*;

    #[test]
    fn vote_proportions_are_multiples_of_tree_count() {
        let d = blobs(15, 3, 4, 1.0, 6);
        let spec = ClassifierSpec::new(Params::RandomForest(ForestParams { trees: 5, ..ForestParams::default() }), 1).unwrap();
        let model = train(&spec, &d).unwrap();
        for row in d.rows() {
            for p in model.predict_distribution(row).unwrap().as_slice() {
                let votes = p * 5.0;
                assert!((votes - votes.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forest_fits_training_data() {
        let d = blobs(20, 2, 4, 1.5, 3);
        let spec = ClassifierSpec::new(Params::RandomForest(ForestParams { trees: 50, ..ForestParams::default() }), 1).unwrap();
        assert!(training_accuracy(&train(&spec, &d).unwrap(), &d) > 0.95);
    }
}
