//! Base classifiers.
//!
//! Every classifier is described by a [`ClassifierSpec`] (kind-specific
//! parameters plus a seed) and trained into an immutable [`Model`]. Training
//! is a pure function of the spec and the data; all randomness comes from a
//! ChaCha8 stream seeded with `spec.seed`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;

pub mod bayes;
pub mod calibration;
pub mod forest;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod rotation;
pub mod svm;
pub mod tree;
pub mod zeror;

pub use bayes::NbParams;
pub use calibration::{calibrate_scores, PlattScaling};
pub use forest::ForestParams;
pub use knn::KnnParams;
pub use logistic::LogisticParams;
pub use mlp::{EarlyStopping, MlpParams};
pub use rotation::RotationParams;
pub use svm::{Kernel, SvmParams};
pub use tree::{SplitCriterion, TreeParams};

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

const QUANTUM: f64 = 1e6;

/// A probability distribution over the `c` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates entries in `[0, 1]` summing to one within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(ProbVector(probs))
    }

    /// Normalizes non-negative finite weights with a positive sum.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::Degenerate("weights sum to zero".into()));
        }
        Ok(ProbVector(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(c: usize) -> Self {
        ProbVector(alloc::vec![1.0 / c as f64; c])
    }

    /// Forces learner output into a valid distribution: non-finite or
    /// negative entries become zero, then the vector is renormalized
    /// (uniform if nothing is left).
    pub(crate) fn sanitize(mut raw: Vec<f64>) -> Self {
        for p in raw.iter_mut() {
            if !p.is_finite() || *p < 0.0 {
                *p = 0.0;
            }
        }
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            for p in raw.iter_mut() {
                *p = (*p / sum).min(1.0);
            }
            ProbVector(raw)
        } else {
            ProbVector::uniform(raw.len())
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    /// Rounds to whole millionths that still sum to exactly one (largest
    /// remainder, ties toward the lower class). Idempotent, and reproduced
    /// exactly by printing with six decimals and parsing back.
    pub fn quantized(&self) -> ProbVector {
        let quotas: Vec<f64> = self.0.iter().map(|p| p * QUANTUM).collect();
        let units = crate::data::largest_remainder(&quotas, QUANTUM as usize);
        ProbVector(units.into_iter().map(|u| u as f64 / QUANTUM).collect())
    }

    /// Most probable class, the lowest index among ties.
    pub fn argmax(&self) -> usize {
        math::argmax(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    Logistic,
    C45Tree,
    Svm,
    Knn,
    Mlp,
    RandomForest,
    RotationForest,
    ZeroR,
    GaussianNb,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 9] = [
        ClassifierKind::Logistic,
        ClassifierKind::C45Tree,
        ClassifierKind::Svm,
        ClassifierKind::Knn,
        ClassifierKind::Mlp,
        ClassifierKind::RandomForest,
        ClassifierKind::RotationForest,
        ClassifierKind::ZeroR,
        ClassifierKind::GaussianNb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::C45Tree => "c45tree",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::RandomForest => "randomForest",
            ClassifierKind::RotationForest => "rotationForest",
            ClassifierKind::ZeroR => "zeroR",
            ClassifierKind::GaussianNb => "gaussianNB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Params {
    Logistic(LogisticParams),
    C45Tree(TreeParams),
    Svm(SvmParams),
    Knn(KnnParams),
    Mlp(MlpParams),
    RandomForest(ForestParams),
    RotationForest(RotationParams),
    ZeroR,
    GaussianNb(NbParams),
}

impl Params {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Params::Logistic(_) => ClassifierKind::Logistic,
            Params::C45Tree(_) => ClassifierKind::C45Tree,
            Params::Svm(_) => ClassifierKind::Svm,
            Params::Knn(_) => ClassifierKind::Knn,
            Params::Mlp(_) => ClassifierKind::Mlp,
            Params::RandomForest(_) => ClassifierKind::RandomForest,
            Params::RotationForest(_) => ClassifierKind::RotationForest,
            Params::ZeroR => ClassifierKind::ZeroR,
            Params::GaussianNb(_) => ClassifierKind::GaussianNb,
        }
    }

    pub fn defaults(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::Logistic => Params::Logistic(LogisticParams::default()),
            ClassifierKind::C45Tree => Params::C45Tree(TreeParams::default()),
            ClassifierKind::Svm => Params::Svm(SvmParams::default()),
            ClassifierKind::Knn => Params::Knn(KnnParams::default()),
            ClassifierKind::Mlp => Params::Mlp(MlpParams::default()),
            ClassifierKind::RandomForest => Params::RandomForest(ForestParams::default()),
            ClassifierKind::RotationForest => Params::RotationForest(RotationParams::default()),
            ClassifierKind::ZeroR => Params::ZeroR,
            ClassifierKind::GaussianNb => Params::GaussianNb(NbParams::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Params::Logistic(p) => p.validate(),
            Params::C45Tree(p) => p.validate(),
            Params::Svm(p) => p.validate(),
            Params::Knn(p) => p.validate(),
            Params::Mlp(p) => p.validate(),
            Params::RandomForest(p) => p.validate(),
            Params::RotationForest(p) => p.validate(),
            Params::ZeroR => Ok(()),
            Params::GaussianNb(p) => p.validate(),
        }
    }
}

/// What to train: a classifier kind, its parameters and its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub params: Params,
    pub seed: u64,
    /// Display name; defaults to a name derived from the parameters.
    pub label: Option<String>,
}

impl ClassifierSpec {
    pub fn new(params: Params, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(ClassifierSpec { params, seed, label: None })
    }

    pub fn defaults(kind: ClassifierKind, seed: u64) -> Self {
        ClassifierSpec { params: Params::defaults(kind), seed, label: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn kind(&self) -> ClassifierKind {
        self.params.kind()
    }

    pub fn logistic(seed: u64) -> Self {
        Self::defaults(ClassifierKind::Logistic, seed).with_label("Logistic")
    }

    pub fn c45(seed: u64) -> Self {
        Self::defaults(ClassifierKind::C45Tree, seed).with_label("C4.5")
    }

    pub fn svm_linear(seed: u64) -> Self {
        Self::defaults(ClassifierKind::Svm, seed).with_label("SVML")
    }

    pub fn svm_quadratic(seed: u64) -> Self {
        let params = SvmParams { kernel: Kernel::Polynomial { degree: 2, coef0: 1.0 }, ..SvmParams::default() };
        ClassifierSpec { params: Params::Svm(params), seed, label: Some("SVMQ".into()) }
    }

    pub fn svm_rbf(c: f64, gamma: f64, seed: u64) -> Self {
        let params = SvmParams { kernel: Kernel::Rbf { gamma }, c, ..SvmParams::default() };
        ClassifierSpec { params: Params::Svm(params), seed, label: None }
    }

    pub fn nearest_neighbour(seed: u64) -> Self {
        Self::defaults(ClassifierKind::Knn, seed).with_label("NN")
    }

    pub fn mlp(seed: u64) -> Self {
        Self::defaults(ClassifierKind::Mlp, seed).with_label("MLP")
    }

    pub fn random_forest(seed: u64) -> Self {
        Self::defaults(ClassifierKind::RandomForest, seed).with_label("RandF")
    }

    pub fn rotation_forest(seed: u64) -> Self {
        Self::defaults(ClassifierKind::RotationForest, seed).with_label("RotF")
    }

    pub fn zero_r(seed: u64) -> Self {
        Self::defaults(ClassifierKind::ZeroR, seed).with_label("ZeroR")
    }

    pub fn naive_bayes(seed: u64) -> Self {
        Self::defaults(ClassifierKind::GaussianNb, seed).with_label("NB")
    }

    /// Compact parameter description, used in results-file headers.
    pub fn describe(&self) -> String {
        let params = match &self.params {
            Params::Logistic(p) => format!("ridge={},maxIter={}", p.ridge, p.max_iterations),
            Params::C45Tree(p) => format!(
                "minLeaf={},prune={},confidence={}",
                p.min_leaf, p.prune, p.confidence
            ),
            Params::Svm(p) => format!("kernel={},C={}", p.kernel, p.c),
            Params::Knn(p) => format!("k={}", p.k),
            Params::Mlp(p) => {
                let hidden = match &p.hidden {
                    Some(h) => h.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("-"),
                    None => String::from("auto"),
                };
                format!(
                    "hidden={},learningRate={},momentum={},epochs={},earlyStopping={}",
                    hidden,
                    p.learning_rate,
                    p.momentum,
                    p.epochs,
                    p.early_stopping.is_some()
                )
            }
            Params::RandomForest(p) => format!("trees={}", p.trees),
            Params::RotationForest(p) => format!("trees={},groupSize={}", p.trees, p.group_size),
            Params::ZeroR => String::new(),
            Params::GaussianNb(p) => format!("varianceFloor={}", p.variance_floor),
        };
        format!("{},{},seed={}", self.kind(), params, self.seed)
    }
}

/// Something that can be trained on a dataset into a [`Model`].
///
/// Implemented by [`ClassifierSpec`] and by the tuning wrappers, so that a
/// component's internal model selection reruns on every training set it sees.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    /// Free-text parameter description.
    fn describe(&self) -> String {
        self.name()
    }

    fn fit(&self, data: &Dataset) -> Result<Model>;
}

impl Learner for ClassifierSpec {
    fn name(&self) -> String {
        match &self.label {
            Some(label) => label.clone(),
            None => String::from(self.kind().as_str()),
        }
    }

    fn describe(&self) -> String {
        ClassifierSpec::describe(self)
    }

    fn fit(&self, data: &Dataset) -> Result<Model> {
        train(self, data)
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }

    fn fit(&self, data: &Dataset) -> Result<Model> {
        (**self).fit(data)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Fitted {
    ZeroR(zeror::ZeroRModel),
    Knn(knn::KnnModel),
    Logistic(logistic::LogisticModel),
    Tree(tree::TreeModel),
    Svm(svm::SvmModel),
    Mlp(mlp::MlpModel),
    Forest(forest::ForestModel),
    Rotation(rotation::RotationModel),
    Nb(bayes::NbModel),
}

/// A trained classifier. Immutable; prediction never mutates state.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ClassifierSpec,
    class_count: usize,
    attribute_count: usize,
    fitted: Fitted,
}

/// Trains `spec` on `data`.
pub fn train(spec: &ClassifierSpec, data: &Dataset) -> Result<Model> {
    spec.params.validate()?;
    let fitted = match &spec.params {
        Params::ZeroR => Fitted::ZeroR(zeror::fit(data)),
        Params::Knn(p) => Fitted::Knn(knn::fit(p, data)?),
        Params::Logistic(p) => Fitted::Logistic(logistic::fit(p, data)),
        Params::C45Tree(p) => Fitted::Tree(tree::fit(p, data, spec.seed)),
        Params::Svm(p) => Fitted::Svm(svm::fit(p, data)?),
        Params::Mlp(p) => Fitted::Mlp(mlp::fit(p, data, spec.seed)?),
        Params::RandomForest(p) => Fitted::Forest(forest::fit(p, data, spec.seed)?),
        Params::RotationForest(p) => Fitted::Rotation(rotation::fit(p, data, spec.seed)?),
        Params::GaussianNb(p) => Fitted::Nb(bayes::fit(p, data)),
    };
    Ok(Model {
        spec: spec.clone(),
        class_count: data.c(),
        attribute_count: data.m(),
        fitted,
    })
}

impl Model {
    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn attribute_count(&self) -> usize {
        self.attribute_count
    }

    pub fn predict_distribution(&self, instance: &[f64]) -> Result<ProbVector> {
        if instance.len() != self.attribute_count {
            return Err(Error::DimensionMismatch {
                expected: self.attribute_count,
                found: instance.len(),
            });
        }
        if instance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("instance has non-finite values".into()));
        }
        let raw = match &self.fitted {
            Fitted::ZeroR(m) => m.distribution(),
            Fitted::Knn(m) => m.distribution(instance),
            Fitted::Logistic(m) => m.distribution(instance),
            Fitted::Tree(m) => m.distribution(instance),
            Fitted::Svm(m) => m.distribution(instance),
            Fitted::Mlp(m) => m.distribution(instance),
            Fitted::Forest(m) => m.distribution(instance),
            Fitted::Rotation(m) => m.distribution(instance),
            Fitted::Nb(m) => m.distribution(instance),
        };
        Ok(ProbVector::sanitize(raw))
    }

    pub fn predict_class(&self, instance: &[f64]) -> Result<usize> {
        Ok(self.predict_distribution(instance)?.argmax())
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn fitted(&self) -> &Fitted {
        &self.fitted
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::Rng;

    /// Gaussian-ish blobs: class `j` centred at `j * spread` on every attribute.
    pub fn blobs(n_per_class: usize, c: usize, m: usize, spread: f64, seed: u64) -> Dataset {
        let mut rng = crate::rng::rng_from_seed(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for j in 0..c {
            for _ in 0..n_per_class {
                let row: Vec<f64> = (0..m)
                    .map(|a| {
                        let noise: f64 = (0..6).map(|_| rng.gen::<f64>()).sum::<f64>() - 3.0;
                        j as f64 * spread * if a % 2 == 0 { 1.0 } else { -1.0 } + noise
                    })
                    .collect();
                rows.push(row);
                labels.push(j);
            }
        }
        Dataset::new(
            "blobs",
            (0..m).map(|a| format!("a{a}")).collect(),
            (0..c).map(|j| format!("k{j}")).collect(),
            rows,
            labels,
        )
        .unwrap()
    }

    pub fn xor() -> Dataset {
        Dataset::new(
            "xor",
            vec!["x".to_string(), "y".to_string()],
            vec!["a".to_string(), "b".to_string()],
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![0, 1, 1, 0],
        )
        .unwrap()
    }

    pub fn training_accuracy(model: &Model, d: &Dataset) -> f64 {
        let correct = (0..d.n())
            .filter(|&i| model.predict_class(d.row(i)).unwrap() == d.label(i))
            .count();
        correct as f64 / d.n() as f64
    }

    pub fn assert_valid_distributions(model: &Model, d: &Dataset) {
        for row in d.rows() {
            let p = model.predict_distribution(row).unwrap();
            assert_eq!(p.len(), d.c());
            assert!(p.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
            let s: f64 = p.as_slice().iter().sum();
            assert!((s - 1.0).abs() <= PROB_SUM_TOLERANCE, "sum {s}");
        }
    }
}
