//! Gaussian-mixture benchmark datasets.

use hesca_core::data::largest_remainder;
use hesca_core::rng::{derive_seed, rng_from_seed};
use hesca_core::Dataset;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// One synthetic dataset: every class is a mixture of `clusters_per_class`
/// spherical Gaussians with standard deviation `overlap`, centred at
/// standard-normal points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub classes: usize,
    pub instances: usize,
    pub attributes: usize,
    pub clusters_per_class: usize,
    pub overlap: f64,
    /// Attributes of pure noise appended after the informative ones.
    pub noise_attributes: usize,
    /// Largest ratio between two class sizes.
    pub imbalance: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(name: &str, classes: usize, instances: usize, attributes: usize, seed: u64) -> Self {
        SynthSpec {
            name: name.into(),
            classes,
            instances,
            attributes,
            clusters_per_class: 2,
            overlap: 0.6,
            noise_attributes: 0,
            imbalance: 2.0,
            seed,
        }
    }
}

pub fn generate(spec: &SynthSpec) -> anyhow::Result<Dataset> {
    let (c, n, m) = (spec.classes, spec.instances, spec.attributes);
    anyhow::ensure!(c >= 2 && m >= 1 && spec.clusters_per_class >= 1, "need c >= 2, m >= 1 and a cluster per class");
    anyhow::ensure!(n >= 4 * c, "need at least 4 instances per class");
    anyhow::ensure!(spec.overlap > 0.0 && spec.imbalance >= 1.0, "overlap must be positive and imbalance >= 1");
    let mut rng = rng_from_seed(derive_seed(&spec.name, spec.seed));

    let shares: Vec<f64> = (0..c).map(|_| rng.gen_range(1.0..=spec.imbalance)).collect();
    let total: f64 = shares.iter().sum();
    let floor = 4usize;
    let spare = n - floor * c;
    let sizes: Vec<usize> = largest_remainder(&shares.iter().map(|s| s / total * spare as f64).collect::<Vec<_>>(), spare)
        .into_iter()
        .map(|k| k + floor)
        .collect();

    let centres: Vec<Vec<Vec<f64>>> = (0..c)
        .map(|_| {
            (0..spec.clusters_per_class)
                .map(|_| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect()
        })
        .collect();

    let width = m + spec.noise_attributes;
    let mut values = Vec::with_capacity(n * width);
    let mut labels = Vec::with_capacity(n);
    for (j, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let centre = &centres[j][rng.gen_range(0..spec.clusters_per_class)];
            for &mu in centre {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(mu + spec.overlap * z);
            }
            for _ in 0..spec.noise_attributes {
                values.push(StandardNormal.sample(&mut rng));
            }
            labels.push(j);
        }
    }
    let attributes = (0..width).map(|a| format!("a{a}")).collect();
    let classes = (0..c).map(|j| format!("c{j}")).collect();
    Ok(Dataset::from_flat(spec.name.clone(), attributes, classes, values, labels)?)
}

/// Fifteen datasets with 2 to 8 classes and, at a half/half split, 100 to
/// 500 train cases; eight of them have at most 200.
pub fn benchmark_suite() -> Vec<SynthSpec> {
    const TRAIN: [usize; 15] = [100, 120, 150, 180, 200, 250, 300, 350, 400, 500, 100, 160, 200, 300, 450];
    TRAIN
        .iter()
        .enumerate()
        .map(|(i, &train)| {
            let mut s = SynthSpec::new(&format!("synth{i:02}"), 2 + i % 7, 2 * train, 3 + i % 5, i as u64);
            s.overlap = 0.55 + 0.05 * (i % 4) as f64;
            s.noise_attributes = i % 3;
            s
        })
        .collect()
}
