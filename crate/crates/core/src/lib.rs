//! Ensembles of mixed classifiers weighted by cross-validation accuracy.
//!
//! This crate holds the algorithmic part of the toolkit: the dataset model and
//! stratified resampling, from-scratch base classifiers, cross-validation
//! weighted probability combination, the four performance statistics, nested
//! hyperparameter search and the nonparametric comparison tests used to rank
//! classifiers over many datasets.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the experiment
//! runner and the command line live in the companion `hesca` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod data;
pub mod ensemble;
pub mod error;
pub mod learners;
mod math;
pub mod metrics;
pub mod rng;
pub mod stats;
pub mod tuning;

pub use data::{class_distribution, stratified_resample, Dataset, Split};
pub use ensemble::{
    build_hesca, combine, compose_from_results, cross_validate, estimate_weight, pick_best,
    CombineMode, ComponentResults, HescaConfig, HescaModel, PredictionRecord, PredictionSet,
    SplitTag,
};
pub use error::{Error, Result};
pub use learners::{ClassifierKind, ClassifierSpec, Learner, Model, Params, ProbVector};
