//! Majority-class baseline: predicts the training class distribution.

use alloc::vec::Vec;

use crate::data::{class_distribution, Dataset};

#[derive(Debug, Clone)]
pub struct ZeroRModel {
    prior: Vec<f64>,
}

pub fn fit(data: &Dataset) -> ZeroRModel {
    ZeroRModel { prior: class_distribution(data) }
}

impl ZeroRModel {
    pub fn distribution(&self) -> Vec<f64> {
        self.prior.clone()
    }
}
