//! Rotation forest: each tree sees the data through a block-diagonal PCA
//! rotation built on random attribute groups.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{self, TreeModel, TreeParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{sqrt, Standardizer};
use crate::rng::{child_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub trees: usize,
    pub group_size: usize,
    /// Bootstrap size, as a fraction of the selected classes' instances, on
    /// which each group's PCA is fitted. `None` fits on all training data.
    pub sample_fraction: Option<f64>,
    pub tree: TreeParams,
}

impl Default for RotationParams {
    fn default() -> Self {
        RotationParams { trees: 50, group_size: 3, sample_fraction: Some(0.5), tree: TreeParams::default() }
    }
}

impl RotationParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.group_size == 0 {
            return Err(Error::InvalidParams("rotation forest needs trees >= 1 and group_size >= 1".into()));
        }
        if let Some(f) = self.sample_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParams(format!("sample fraction must lie in (0, 1], got {f}")));
            }
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone)]
struct Group {
    attributes: Vec<usize>,
    mean: Vec<f64>,
    /// Column-major principal axes: component `q` is `axes[q*k..(q+1)*k]`.
    axes: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Rotation {
    groups: Vec<Group>,
}

impl Rotation {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        for g in &self.groups {
            let k = g.attributes.len();
            for q in 0..k {
                let axis = &g.axes[q * k..(q + 1) * k];
                out.push(g.attributes.iter().zip(&g.mean).zip(axis).map(|((&a, mu), v)| (x[a] - mu) * v).sum());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RotationModel {
    scaler: Standardizer,
    members: Vec<(Rotation, TreeModel)>,
    c: usize,
}

/// Eigen-decomposition of a symmetric `k x k` matrix by cyclic Jacobi
/// rotations. Returns eigenvalues (descending) and matching unit eigenvectors
/// (column-major), each signed so its largest-magnitude entry is positive.
pub(crate) fn symmetric_eigen(matrix: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * k + j] * a[i * k + j]).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[r * k + p], a[r * k + q]);
                    a[r * k + p] = c * arp - s * arq;
                    a[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[p * k + r], a[q * k + r]);
                    a[p * k + r] = c * apr - s * aqr;
                    a[q * k + r] = s * apr + c * aqr;
                }
                for r in 0..k {
                    let (vrp, vrq) = (v[r * k + p], v[r * k + q]);
                    v[r * k + p] = c * vrp - s * vrq;
                    v[r * k + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| a[y * k + y].total_cmp(&a[x * k + x]));
    let values = order.iter().map(|&j| a[j * k + j]).collect();
    let mut vectors = Vec::with_capacity(k * k);
    for &j in &order {
        let mut col: Vec<f64> = (0..k).map(|r| v[r * k + j]).collect();
        let lead = col.iter().fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.extend(col);
    }
    (values, vectors)
}

fn fit_group(attributes: Vec<usize>, rows: &[Vec<f64>], sample: &[usize]) -> Group {
    let k = attributes.len();
    let n = sample.len() as f64;
    let mut mean = vec![0.0; k];
    for &i in sample {
        for (mu, &a) in mean.iter_mut().zip(&attributes) {
            *mu += rows[i][a] / n;
        }
    }
    let mut cov = vec![0.0; k * k];
    if sample.len() > 1 {
        for &i in sample {
            for p in 0..k {
                let dp = rows[i][attributes[p]] - mean[p];
                for q in 0..k {
                    cov[p * k + q] += dp * (rows[i][attributes[q]] - mean[q]) / (n - 1.0);
                }
            }
        }
    }
    let (_, axes) = symmetric_eigen(&cov, k);
    Group { attributes, mean, axes }
}

fn draw_rotation(params: &RotationParams, data: &Dataset, rows: &[Vec<f64>], rng: &mut Rng) -> Rotation {
    let m = data.m();
    let mut attributes: Vec<usize> = (0..m).collect();
    attributes.shuffle(rng);
    let by_class = data.class_indices();
    let groups = attributes
        .chunks(params.group_size)
        .map(|chunk| {
            let mut group = chunk.to_vec();
            group.sort_unstable();
            let sample: Vec<usize> = match params.sample_fraction {
                None => (0..data.n()).collect(),
                Some(fraction) => {
                    let classes: Vec<usize> = loop {
                        let pick: Vec<usize> = (0..data.c()).filter(|_| rng.gen_bool(0.5)).collect();
                        if !pick.is_empty() {
                            break pick;
                        }
                    };
                    let pool: Vec<usize> = classes.iter().flat_map(|&j| by_class[j].iter().copied()).collect();
                    let size = ((pool.len() as f64 * fraction) as usize).max(1);
                    (0..size).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
                }
            };
            fit_group(group, rows, &sample)
        })
        .collect();
    Rotation { groups }
}

pub fn fit(params: &RotationParams, data: &Dataset, seed: u64) -> Result<RotationModel> {
    let m = data.m();
    let scaler = Standardizer::fit(data.rows(), m);
    let rows: Vec<Vec<f64>> = data.rows().map(|r| scaler.transform(r)).collect();
    let names: Vec<String> = (0..m).map(|a| format!("pc{a}")).collect();
    let mut members = Vec::with_capacity(params.trees);
    for t in 0..params.trees {
        let mut rng = rng_from_seed(child_seed(seed, t as u64));
        let rotation = draw_rotation(params, data, &rows, &mut rng);
        let mut i = 0;
        let rotated = data.map_rows(names.clone(), |_| {
            i += 1;
            rotation.apply(&rows[i - 1])
        })?;
        let tree = tree::build(&params.tree, &rotated, (0..data.n()).collect(), &mut rng);
        members.push((rotation, tree));
    }
    Ok(RotationModel { scaler, members, c: data.c() })
}

impl RotationModel {
    /// Mean of the member trees' distributions.
    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let z = self.scaler.transform(x);
        let mut out = vec![0.0; self.c];
        for (rotation, tree) in &self.members {
            for (o, p) in out.iter_mut().zip(tree.distribution(&rotation.apply(&z))) {
                *o += p;
            }
        }
        let k = self.members.len() as f64;
        out.iter().map(|v| v / k).collect()
    }

    /// Class predicted by each member tree.
    pub fn tree_votes(&self, x: &[f64]) -> Vec<usize> {
        let z = self.scaler.transform(x);
        self.members.iter().map(|(rotation, tree)| tree.vote(&rotation.apply(&z))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{train, ClassifierSpec, Fitted, Params};
    use super::*;
    use crate::math::argmax;

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let (values, vectors) = symmetric_eigen(&a, 3);
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..3 {
            for j in 0..3 {
                let rebuilt: f64 = (0..3).map(|q| values[q] * vectors[q * 3 + i] * vectors[q * 3 + j]).sum();
                assert!((rebuilt - a[i * 3 + j]).abs() < 1e-10);
            }
        }
        for q in 0..3 {
            let col = &vectors[q * 3..q * 3 + 3];
            assert!((col.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_group_without_sampling_matches_tree_majority() {
        let d = blobs(15, 3, 4, 1.0, 12);
        let params = RotationParams { trees: 7, group_size: d.m(), sample_fraction: None, ..RotationParams::default() };
        let model = train(&ClassifierSpec::new(Params::RotationForest(params), 2).unwrap(), &d).unwrap();
        let rot = match model.fitted() {
            Fitted::Rotation(r) => r,
            _ => unreachable!(),
        };
        for row in d.rows() {
            let mut counts = vec![0.0; d.c()];
            for v in rot.tree_votes(row) {
                counts[v] += 1.0;
            }
            assert_eq!(model.predict_class(row).unwrap(), argmax(&counts));
        }
    }

    #[test]
    fn learns_blobs() {
        let d = blobs(20, 3, 5, 1.5, 1);
        let params = RotationParams { trees: 10, ..RotationParams::default() };
        let model = train(&ClassifierSpec::new(Params::RotationForest(params), 4).unwrap(), &d).unwrap();
        assert!(training_accuracy(&model, &d) > 0.9);
        assert_valid_distributions(&model, &d);
    }
}
