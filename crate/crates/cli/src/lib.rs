//! Experiment runner, results files and comparison reports for `hesca-core`.

pub mod compare;
pub mod config;
pub mod data_io;
pub mod experiment;
pub mod results;
pub mod synth;
