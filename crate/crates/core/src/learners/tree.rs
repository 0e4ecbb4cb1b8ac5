//! C4.5-style decision tree on numeric attributes.
//!
//! Binary splits at midpoints between sorted distinct values, chosen by gain
//! ratio among the attributes whose information gain is at least average
//! (or by plain information gain), followed by pessimistic-error subtree
//! replacement. Leaves carry class counts and predict Laplace-smoothed
//! frequencies.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{log2, powf, sqrt};
use crate::rng::{rng_from_seed, Rng};
use crate::stats::special::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    GainRatio,
    InfoGain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: SplitCriterion,
    /// Minimum instances on each side of a split.
    pub min_leaf: usize,
    pub prune: bool,
    /// Confidence factor of the pessimistic error estimate.
    pub confidence: f64,
    pub laplace: bool,
    /// Attributes sampled at each node; `None` considers all of them.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            criterion: SplitCriterion::GainRatio,
            min_leaf: 2,
            prune: true,
            confidence: 0.25,
            laplace: true,
            max_features: None,
            max_depth: None,
        }
    }
}

impl TreeParams {
    /// Fully grown tree: no pruning, single-instance leaves, every impure
    /// node split while any split exists.
    pub fn unpruned() -> Self {
        TreeParams { min_leaf: 1, prune: false, ..TreeParams::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidParams("tree min_leaf must be >= 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence <= 0.5) {
            return Err(Error::InvalidParams("tree confidence must lie in (0, 0.5]".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidParams("tree max_features must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { counts: Vec<f64> },
    Split { attribute: usize, threshold: f64, left: usize, right: usize, counts: Vec<f64> },
}

impl Node {
    fn counts(&self) -> &[f64] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => counts,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TreeModel {
    nodes: Vec<Node>,
    c: usize,
    laplace: bool,
}

pub fn fit(params: &TreeParams, data: &Dataset, seed: u64) -> TreeModel {
    let mut rng = rng_from_seed(seed);
    build(params, data, (0..data.n()).collect(), &mut rng)
}

/// Grows a tree on the instances at `indices` (duplicates allowed).
pub(crate) fn build(params: &TreeParams, data: &Dataset, indices: Vec<usize>, rng: &mut Rng) -> TreeModel {
    let mut builder = Builder { params, data, rng, nodes: Vec::new() };
    builder.grow(indices, 0);
    let mut tree = TreeModel { nodes: builder.nodes, c: data.c(), laplace: params.laplace };
    if params.prune {
        let z = normal_quantile(1.0 - params.confidence);
        tree.prune(0, params.confidence, z);
    }
    tree.compact();
    tree
}

struct Builder<'a> {
    params: &'a TreeParams,
    data: &'a Dataset,
    rng: &'a mut Rng,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate {
    attribute: usize,
    gain: f64,
    ratio: f64,
    threshold: f64,
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&k| k > 0.0)
        .map(|&k| {
            let p = k / total;
            -p * log2(p)
        })
        .sum()
}

impl Builder<'_> {
    fn class_counts(&self, indices: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.data.c()];
        for &i in indices {
            counts[self.data.label(i)] += 1.0;
        }
        counts
    }

    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_counts(&indices);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });

        let n = indices.len();
        let pure = counts.iter().filter(|&&k| k > 0.0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&indices, &counts) else {
            return id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.data.row(i)[best.attribute] <= best.threshold);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            attribute: best.attribute,
            threshold: best.threshold,
            left,
            right,
            counts,
        };
        id
    }

    fn candidate_attributes(&mut self) -> Vec<usize> {
        let m = self.data.m();
        match self.params.max_features {
            Some(k) if k < m => {
                let mut picked = sample(self.rng, m, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..m).collect(),
        }
    }

    fn best_split(&mut self, indices: &[usize], counts: &[f64]) -> Option<Candidate> {
        let total = indices.len() as f64;
        let parent_entropy = entropy(counts, total);
        let candidates: Vec<Candidate> = self
            .candidate_attributes()
            .into_iter()
            .filter_map(|a| self.split_on(a, indices, counts, parent_entropy))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        // first maximum wins, so ties go to the lower attribute index
        let pick = |pool: &mut dyn Iterator<Item = &Candidate>, key: fn(&Candidate) -> f64| {
            let mut best: Option<Candidate> = None;
            for cand in pool {
                if best.is_none_or(|b| key(cand) > key(&b)) {
                    best = Some(*cand);
                }
            }
            best
        };
        let informative: Vec<&Candidate> = candidates.iter().filter(|c| c.gain > 0.0).collect();
        if informative.is_empty() {
            // grown trees keep splitting impure nodes even without gain
            if self.params.prune {
                return None;
            }
            return pick(&mut candidates.iter(), |c| c.gain);
        }
        match self.params.criterion {
            SplitCriterion::InfoGain => pick(&mut informative.into_iter(), |c| c.gain),
            SplitCriterion::GainRatio => {
                let avg = informative.iter().map(|c| c.gain).sum::<f64>() / informative.len() as f64;
                pick(
                    &mut informative.into_iter().filter(|c| c.gain >= avg - 1e-3),
                    |c| c.ratio,
                )
            }
        }
    }

    /// Best binary threshold on attribute `a` by information gain.
    fn split_on(
        &self,
        a: usize,
        indices: &[usize],
        counts: &[f64],
        parent_entropy: f64,
    ) -> Option<Candidate> {
        let mut pairs: Vec<(f64, usize)> = indices
            .iter()
            .map(|&i| (self.data.row(i)[a], self.data.label(i)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let n = pairs.len();
        let total = n as f64;
        let min_leaf = self.params.min_leaf;
        let distinct_gaps = pairs.windows(2).filter(|w| w[0].0 < w[1].0).count();
        if distinct_gaps == 0 {
            return None;
        }

        let mut left = vec![0.0; counts.len()];
        let mut right = counts.to_vec();
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n - 1 {
            let y = pairs[k].1;
            left[y] += 1.0;
            right[y] -= 1.0;
            let n_left = k + 1;
            if pairs[k].0 == pairs[k + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let (nl, nr) = (n_left as f64, (n - n_left) as f64);
            let gain = parent_entropy - (nl / total) * entropy(&left, nl) - (nr / total) * entropy(&right, nr);
            if best.is_none_or(|(g, _)| gain > g + 1e-12) {
                best = Some((gain, k));
            }
        }
        let (mut gain, k) = best?;
        if self.params.criterion == SplitCriterion::GainRatio {
            gain -= log2(distinct_gaps as f64) / total;
        }
        let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
        let split_info = entropy(&[nl, nr], total);
        let ratio = if split_info > 0.0 { gain / split_info } else { 0.0 };
        let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
        let mut threshold = lo + (hi - lo) / 2.0;
        if !(threshold < hi) {
            threshold = lo;
        }
        Some(Candidate { attribute: a, gain, ratio, threshold })
    }
}

/// Extra errors of the pessimistic upper bound at confidence `cf` for a leaf
/// covering `n` instances with `e` errors.
pub(crate) fn added_errors(n: f64, e: f64, cf: f64, z: f64) -> f64 {
    if e < 1.0 {
        let base = n * (1.0 - powf(cf, 1.0 / n));
        if e == 0.0 {
            return base;
        }
        return base + e * (added_errors(n, 1.0, cf, z) - base);
    }
    if e + 0.5 >= n {
        return (n - e).max(0.0);
    }
    let f = (e + 0.5) / n;
    let r = (f + z * z / (2.0 * n) + z * sqrt(f / n - f * f / n + z * z / (4.0 * n * n))) / (1.0 + z * z / n);
    r * n - e
}

fn leaf_errors(counts: &[f64]) -> (f64, f64) {
    let n: f64 = counts.iter().sum();
    let max = counts.iter().copied().fold(0.0, f64::max);
    (n, n - max)
}

impl TreeModel {
    /// Subtree replacement, bottom up; returns the estimated errors of `id`.
    fn prune(&mut self, id: usize, cf: f64, z: f64) -> f64 {
        let (n, e) = leaf_errors(self.nodes[id].counts());
        let as_leaf = e + added_errors(n, e, cf, z);
        let (left, right) = match &self.nodes[id] {
            Node::Leaf { .. } => return as_leaf,
            Node::Split { left, right, .. } => (*left, *right),
        };
        let subtree = self.prune(left, cf, z) + self.prune(right, cf, z);
        if as_leaf <= subtree + 0.1 {
            let counts = self.nodes[id].counts().to_vec();
            self.nodes[id] = Node::Leaf { counts };
            as_leaf
        } else {
            subtree
        }
    }

    /// Drops nodes orphaned by pruning.
    fn compact(&mut self) {
        let mut out = Vec::with_capacity(self.nodes.len());
        self.copy_into(0, &mut out);
        self.nodes = out;
    }

    fn copy_into(&self, id: usize, out: &mut Vec<Node>) -> usize {
        let new_id = out.len();
        out.push(self.nodes[id].clone());
        if let Node::Split { left, right, .. } = self.nodes[id] {
            let l = self.copy_into(left, out);
            let r = self.copy_into(right, out);
            if let Node::Split { left, right, .. } = &mut out[new_id] {
                *left = l;
                *right = r;
            }
        }
        new_id
    }

    fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { counts } => return counts,
                Node::Split { attribute, threshold, left, right, .. } => {
                    id = if x[*attribute] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn distribution(&self, x: &[f64]) -> Vec<f64> {
        let counts = self.leaf_for(x);
        let n: f64 = counts.iter().sum();
        if self.laplace {
            counts.iter().map(|k| (k + 1.0) / (n + self.c as f64)).collect()
        } else {
            counts.iter().map(|k| k / n).collect()
        }
    }

    /// Majority class of the leaf reached by `x`, lowest index on ties.
    pub fn vote(&self, x: &[f64]) -> usize {
        crate::math::argmax(self.leaf_for(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::testutil::{blobs, training_accuracy, xor};
    use crate::learners::{train, ClassifierSpec, Fitted, Params};

    fn tree_of(model: &crate::learners::Model) -> &TreeModel {
        match model.fitted() {
            Fitted::Tree(t) => t,
            _ => unreachable!(),
        }
    }

    /// Every axis-aligned single split of the XOR square leaves one point of
    /// each class on both sides.
    #[test]
    fn no_stump_separates_xor() {
        let d = xor();
        for a in 0..2 {
            for t in [-0.5, 0.5, 1.5] {
                let mut sides = [[0usize; 2]; 2];
                for i in 0..4 {
                    let side = (d.row(i)[a] <= t) as usize;
                    sides[side][d.label(i)] += 1;
                }
                let correct: usize = sides.iter().map(|s| *s.iter().max().unwrap()).sum();
                assert!(correct < 4, "attribute {a} threshold {t}");
            }
        }
    }

    #[test]
    fn grown_tree_solves_xor_with_depth_two() {
        let spec = ClassifierSpec::new(Params::C45Tree(TreeParams::unpruned()), 0).unwrap();
        let d = xor();
        let model = train(&spec, &d).unwrap();
        assert_eq!(training_accuracy(&model, &d), 1.0);
        assert!(tree_of(&model).depth() >= 2);
    }

    #[test]
    fn pruned_tree_stays_small_on_pure_noise() {
        let d = blobs(40, 2, 3, 0.0, 17);
        let model = train(&ClassifierSpec::c45(0), &d).unwrap();
        let grown = ClassifierSpec::new(Params::C45Tree(TreeParams::unpruned()), 0).unwrap();
        let full = train(&grown, &d).unwrap();
        assert!(tree_of(&model).leaf_count() < tree_of(&full).leaf_count());
    }

    #[test]
    fn learns_separated_blobs() {
        let d = blobs(30, 3, 2, 5.0, 2);
        let model = train(&ClassifierSpec::c45(0), &d).unwrap();
        assert!(training_accuracy(&model, &d) > 0.95);
    }

    #[test]
    fn laplace_leaf_distribution() {
        let d = crate::data::fixtures::with_counts("l", &[3, 3]);
        let model = train(&ClassifierSpec::c45(0), &d).unwrap();
        // x = index, classes split at 2.5; pure leaves of 3 give (3+1)/(3+2)
        let p = model.predict_distribution(&[0.0]).unwrap();
        assert!((p.get(0) - 0.8).abs() < 1e-12, "{p:?}");
    }

    /// Reference values of the pessimistic bound at CF = 0.25.
    #[test]
    fn added_errors_reference_values() {
        let z = normal_quantile(0.75);
        assert!((z - 0.6744897501960817).abs() < 1e-9);
        // zero errors: n * (1 - cf^(1/n))
        assert!((added_errors(4.0, 0.0, 0.25, z) - 4.0 * (1.0 - libm::pow(0.25, 0.25))).abs() < 1e-12);
        // e + 0.5 >= n
        assert_eq!(added_errors(2.0, 2.0, 0.25, z), 0.0);
        let v = added_errors(10.0, 2.0, 0.25, z);
        assert!(v > 0.0 && v < 3.0, "{v}");
    }
}
