//! Cross-validated hyperparameter search.
//!
//! Every candidate is scored by stratified cross-validation accuracy over one
//! fold partition shared by all candidates. The best score wins, ties going to
//! the earliest candidate; a candidate whose training fails scores zero.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_folds, Dataset};
use crate::ensemble::cross_validate_on;
use crate::error::{Error, Result};
use crate::learners::{ClassifierKind, ClassifierSpec, Kernel, Learner, Model, Params};
use crate::math::{exp, ln, powf};
use crate::rng::{derive_seed, rng_from_seed};

/// Named values for a subset of a classifier's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(pub Vec<(String, f64)>);

impl ParamPoint {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn describe(&self) -> String {
        self.0.iter().map(|(n, v)| format!("{n}={v}")).collect::<Vec<_>>().join(",")
    }
}

/// Cartesian grid; iteration is lexicographic with the first axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    axes: Vec<(String, Vec<f64>)>,
}

impl ParamGrid {
    pub fn new(axes: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidArgument("parameter grid axes must be non-empty".into()));
        }
        Ok(ParamGrid { axes })
    }

    pub fn axes(&self) -> &[(String, Vec<f64>)] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut index: usize) -> ParamPoint {
        let mut values = vec![0.0; self.axes.len()];
        for (a, (_, axis)) in self.axes.iter().enumerate().rev() {
            values[a] = axis[index % axis.len()];
            index /= axis.len();
        }
        ParamPoint(self.axes.iter().zip(values).map(|((n, _), v)| (n.clone(), v)).collect())
    }

    pub fn points(&self) -> impl Iterator<Item = ParamPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }
}

fn powers_of_two(exponents: impl Iterator<Item = i32>) -> Vec<f64> {
    exponents.map(|e| powf(2.0, e as f64)).collect()
}

/// `C` and `gamma` over `2^-16 .. 2^16` (33 x 33 points).
pub fn default_rbf_grid() -> ParamGrid {
    let axis = powers_of_two(-16..=16);
    ParamGrid { axes: vec![("C".into(), axis.clone()), ("gamma".into(), axis)] }
}

/// `C` and `gamma` over `2^{-8, -4, 0, 4, 8}` (5 x 5 points).
pub fn desk_rbf_grid() -> ParamGrid {
    let axis = powers_of_two([-8, -4, 0, 4, 8].into_iter());
    ParamGrid { axes: vec![("C".into(), axis.clone()), ("gamma".into(), axis)] }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AxisSampler {
    /// `exp` of a uniform draw over `[ln low, ln high]`.
    LogUniform { low: f64, high: f64 },
    /// Integer uniform over `[low, high]`.
    UniformInt { low: i64, high: i64 },
    /// Integer uniform over `[low, value of an earlier axis]`.
    UniformIntUpTo { low: i64, axis: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SearchSpace {
    Random(Vec<(String, AxisSampler)>),
    /// Grid points in iteration order.
    Exhaustive(ParamGrid),
}

impl SearchSpace {
    /// The first `budget` points; random spaces are sampled from `seed`.
    pub fn sample(&self, budget: usize, seed: u64) -> Result<Vec<ParamPoint>> {
        if budget == 0 {
            return Err(Error::InvalidArgument("search budget must be >= 1".into()));
        }
        match self {
            SearchSpace::Exhaustive(grid) => Ok(grid.points().take(budget).collect()),
            SearchSpace::Random(axes) => {
                let mut rng = rng_from_seed(seed);
                (0..budget)
                    .map(|_| {
                        let mut point: Vec<(String, f64)> = Vec::with_capacity(axes.len());
                        for (name, sampler) in axes {
                            let v = match sampler {
                                AxisSampler::LogUniform { low, high } => exp(rng.gen_range(ln(*low)..=ln(*high))),
                                AxisSampler::UniformInt { low, high } => rng.gen_range(*low..=(*high).max(*low)) as f64,
                                AxisSampler::UniformIntUpTo { low, axis } => {
                                    let high = point
                                        .iter()
                                        .find(|(n, _)| n == axis)
                                        .map(|(_, v)| *v as i64)
                                        .ok_or_else(|| Error::InvalidParams(format!("axis {axis} must precede {name}")))?;
                                    let low = (*low).min(high);
                                    rng.gen_range(low..=high) as f64
                                }
                            };
                            point.push((name.clone(), v));
                        }
                        Ok(ParamPoint(point))
                    })
                    .collect()
            }
        }
    }
}

/// Learning rate log-uniform over `[1e-5, 1e-1]`, first hidden layer between
/// `1.5 m` and `5 m` units, second between `c` and the first.
pub fn mlp_search_space(m: usize, c: usize) -> SearchSpace {
    let low = (3 * m).div_ceil(2).max(1) as i64;
    SearchSpace::Random(vec![
        ("learningRate".into(), AxisSampler::LogUniform { low: 1e-5, high: 1e-1 }),
        ("hidden1".into(), AxisSampler::UniformInt { low, high: (5 * m as i64).max(low) }),
        ("hidden2".into(), AxisSampler::UniformIntUpTo { low: c as i64, axis: "hidden1".into() }),
    ])
}

/// Folds used for a search over `kind`: 3 for the network, 10 otherwise.
pub fn default_folds(kind: ClassifierKind) -> usize {
    if kind == ClassifierKind::Mlp {
        3
    } else {
        10
    }
}

fn positive_int(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && libm::trunc(v) == v {
        Ok(v as usize)
    } else {
        Err(Error::InvalidParams(format!("{name} must be a positive integer, got {v}")))
    }
}

/// `base` with the parameters named in `point` overwritten.
pub fn apply_point(base: &ClassifierSpec, point: &ParamPoint) -> Result<ClassifierSpec> {
    let mut spec = base.clone();
    spec.label = None;
    for (name, v) in &point.0 {
        let v = *v;
        let known = match (&mut spec.params, name.as_str()) {
            (Params::Svm(p), "C") => {
                p.c = v;
                true
            }
            (Params::Svm(p), "gamma") => {
                p.kernel = Kernel::Rbf { gamma: v };
                true
            }
            (Params::Mlp(p), "learningRate") => {
                p.learning_rate = v;
                true
            }
            (Params::Mlp(p), "momentum") => {
                p.momentum = v;
                true
            }
            (Params::Mlp(p), "epochs") => {
                p.epochs = positive_int(name, v)?;
                true
            }
            (Params::Mlp(p), "hidden1") => {
                let mut h = p.hidden.clone().unwrap_or_default();
                h.resize(h.len().max(1), 1);
                h[0] = positive_int(name, v)?;
                p.hidden = Some(h);
                true
            }
            (Params::Mlp(p), "hidden2") => {
                let mut h = p.hidden.clone().unwrap_or_default();
                h.resize(2, 1);
                h[1] = positive_int(name, v)?;
                p.hidden = Some(h);
                true
            }
            (Params::Knn(p), "k") => {
                p.k = positive_int(name, v)?;
                true
            }
            (Params::Logistic(p), "ridge") => {
                p.ridge = v;
                true
            }
            (Params::C45Tree(p), "confidence") => {
                p.confidence = v;
                true
            }
            (Params::C45Tree(p), "minLeaf") => {
                p.min_leaf = positive_int(name, v)?;
                true
            }
            (Params::RandomForest(p), "trees") => {
                p.trees = positive_int(name, v)?;
                true
            }
            (Params::RotationForest(p), "trees") => {
                p.trees = positive_int(name, v)?;
                true
            }
            _ => false,
        };
        if !known {
            return Err(Error::InvalidParams(format!("{} has no tunable parameter {name}", base.kind())));
        }
    }
    spec.params.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub chosen: ParamPoint,
    pub chosen_index: usize,
    /// Cross-validation accuracy of the chosen point.
    pub train_estimate: f64,
    pub evaluations: Vec<(ParamPoint, f64)>,
    /// Candidates whose training failed, with the error; they scored zero.
    pub failures: Vec<(usize, String)>,
    /// Fold count and seed of the partition every candidate was scored on.
    pub folds: usize,
    pub fold_seed: u64,
}

impl SearchResult {
    /// The fold partition the candidates were scored on.
    pub fn partition(&self, train: &Dataset) -> Result<Vec<Vec<usize>>> {
        stratified_folds(train, self.folds, self.fold_seed)
    }
}

fn search(base: &ClassifierSpec, points: Vec<ParamPoint>, train: &Dataset, folds: usize, fold_seed: u64) -> Result<SearchResult> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no candidate points".into()));
    }
    let partition = stratified_folds(train, folds, fold_seed)?;
    let mut evaluations = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (i, point) in points.into_iter().enumerate() {
        let score = apply_point(base, &point).and_then(|spec| {
            let records = cross_validate_on(&spec, train, &partition)?;
            Ok(records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64)
        });
        let score = match score {
            Ok(s) => s,
            Err(e) => {
                failures.push((i, e.to_string()));
                0.0
            }
        };
        evaluations.push((point, score));
    }
    let mut best = 0;
    for (i, (_, s)) in evaluations.iter().enumerate() {
        if *s > evaluations[best].1 {
            best = i;
        }
    }
    Ok(SearchResult {
        chosen: evaluations[best].0.clone(),
        chosen_index: best,
        train_estimate: evaluations[best].1,
        evaluations,
        failures,
        folds,
        fold_seed,
    })
}

/// Scores every grid point of `base`'s parameters on `train`.
pub fn grid_search_cv(
    base: &ClassifierSpec,
    grid: &ParamGrid,
    train: &Dataset,
    folds: usize,
    fold_seed: u64,
) -> Result<SearchResult> {
    search(base, grid.points().collect(), train, folds, fold_seed)
}

/// Scores `budget` points drawn from `space` with `seed`.
pub fn random_search_cv(
    base: &ClassifierSpec,
    space: &SearchSpace,
    budget: usize,
    train: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<SearchResult> {
    let points = space.sample(budget, seed)?;
    search(base, points, train, folds, derive_seed("folds", seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Search {
    Grid(ParamGrid),
    Random { space: SearchSpace, budget: usize },
    /// The network search over a space built from the training data's shape.
    MlpRandom { budget: usize },
}

/// A learner that reruns its parameter search on every training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedLearner {
    pub base: ClassifierSpec,
    pub search: Search,
    pub folds: usize,
    pub name: String,
}

impl TunedLearner {
    /// RBF support vector machine tuned over `grid`.
    pub fn rbf_svm(grid: ParamGrid, seed: u64) -> Self {
        TunedLearner {
            base: ClassifierSpec::svm_rbf(1.0, 1.0, seed),
            search: Search::Grid(grid),
            folds: default_folds(ClassifierKind::Svm),
            name: "TunedSVMRBF".into(),
        }
    }

    /// Two-hidden-layer network with early stopping, tuned by random search.
    pub fn deep_mlp(budget: usize, seed: u64) -> Self {
        let params = crate::learners::MlpParams {
            hidden: Some(vec![1, 1]),
            early_stopping: Some(crate::learners::EarlyStopping::default()),
            ..crate::learners::MlpParams::default()
        };
        TunedLearner {
            base: ClassifierSpec { params: Params::Mlp(params), seed, label: None },
            search: Search::MlpRandom { budget },
            folds: default_folds(ClassifierKind::Mlp),
            name: "DNN".into(),
        }
    }

    /// Runs the search on `train`; returns the result and the chosen spec.
    pub fn tune(&self, train: &Dataset) -> Result<(SearchResult, ClassifierSpec)> {
        let seed = derive_seed("tuning", self.base.seed);
        let result = match &self.search {
            Search::Grid(grid) => grid_search_cv(&self.base, grid, train, self.folds, seed)?,
            Search::Random { space, budget } => random_search_cv(&self.base, space, *budget, train, self.folds, seed)?,
            Search::MlpRandom { budget } => {
                let space = mlp_search_space(train.m(), train.c());
                random_search_cv(&self.base, &space, *budget, train, self.folds, seed)?
            }
        };
        let spec = apply_point(&self.base, &result.chosen)?;
        Ok((result, spec))
    }
}

impl Learner for TunedLearner {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn describe(&self) -> String {
        let search = match &self.search {
            Search::Grid(g) => format!("grid={}", g.len()),
            Search::Random { budget, .. } | Search::MlpRandom { budget } => format!("random={budget}"),
        };
        format!("tuned,{},{search},folds={}", self.base.describe(), self.folds)
    }

    fn fit(&self, data: &Dataset) -> Result<Model> {
        let (_, spec) = self.tune(data)?;
        spec.fit(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::estimate_weight;
    use crate::learners::testutil::blobs;

    #[test]
    fn grid_iterates_first_axis_slowest() {
        let g = ParamGrid::new(vec![("C".into(), vec![1.0, 2.0]), ("gamma".into(), vec![3.0, 4.0, 5.0])]).unwrap();
        let pts: Vec<(f64, f64)> = g.points().map(|p| (p.get("C").unwrap(), p.get("gamma").unwrap())).collect();
        assert_eq!(pts, vec![(1.0, 3.0), (1.0, 4.0), (1.0, 5.0), (2.0, 3.0), (2.0, 4.0), (2.0, 5.0)]);
        assert_eq!(default_rbf_grid().len(), 1089);
        assert_eq!(desk_rbf_grid().len(), 25);
    }

    #[test]
    fn single_point_grid_and_ties() {
        let d = blobs(10, 2, 2, 2.0, 1);
        let base = ClassifierSpec::nearest_neighbour(0);
        let one = ParamGrid::new(vec![("k".into(), vec![1.0])]).unwrap();
        let r = grid_search_cv(&base, &one, &d, 5, 9).unwrap();
        assert_eq!(r.chosen_index, 0);
        assert_eq!(r.train_estimate, estimate_weight(&base, &d, 5, 9).unwrap());
        // identical points tie; the first wins
        let twice = ParamGrid::new(vec![("k".into(), vec![1.0, 1.0])]).unwrap();
        assert_eq!(grid_search_cv(&base, &twice, &d, 5, 9).unwrap().chosen_index, 0);
    }

    #[test]
    fn failed_point_scores_zero() {
        let d = blobs(5, 2, 2, 2.0, 1);
        let g = ParamGrid::new(vec![("k".into(), vec![1000.0, 1.0])]).unwrap();
        let r = grid_search_cv(&ClassifierSpec::nearest_neighbour(0), &g, &d, 2, 1).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.evaluations[0].1, 0.0);
        assert_eq!(r.chosen_index, 1);
    }

    #[test]
    fn random_search_is_deterministic_and_in_range() {
        let space = mlp_search_space(4, 3);
        let a = space.sample(20, 7).unwrap();
        assert_eq!(a, space.sample(20, 7).unwrap());
        for p in &a {
            let lr = p.get("learningRate").unwrap();
            assert!((1e-5..=1e-1).contains(&lr));
            let h1 = p.get("hidden1").unwrap();
            assert!((6.0..=20.0).contains(&h1));
            let h2 = p.get("hidden2").unwrap();
            assert!(h2 >= 3.0 && h2 <= h1);
        }
    }

    #[test]
    fn exhaustive_search_matches_grid_search() {
        let d = blobs(8, 2, 2, 0.7, 3);
        let base = ClassifierSpec::svm_rbf(1.0, 1.0, 0);
        let grid = ParamGrid::new(vec![("C".into(), vec![0.1, 10.0]), ("gamma".into(), vec![0.01, 4.0])]).unwrap();
        let seed = 11;
        let random = random_search_cv(&base, &SearchSpace::Exhaustive(grid.clone()), 4, &d, 4, seed).unwrap();
        let full = grid_search_cv(&base, &grid, &d, 4, derive_seed("folds", seed)).unwrap();
        assert_eq!(random, full);
    }

    #[test]
    fn unknown_parameter_rejected() {
        let p = ParamPoint(vec![("gamma".into(), 1.0)]);
        assert!(apply_point(&ClassifierSpec::logistic(0), &p).is_err());
    }
}
