//! Cross-validation weighted ensembles.
//!
//! Each component's weight is its stratified cross-validation accuracy on the
//! train data. Distributions are combined as `p_j ∝ Σ_i w_i^α q_ij` and
//! normalized by their sum. Component distributions and weights are rounded
//! to the six decimals of the results-file format before combining, so an
//! ensemble built live and one composed from stored results agree exactly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{complement, stratified_folds, Dataset};
use crate::error::{Error, Result};
use crate::learners::{Learner, Model, ProbVector};
use crate::math::powf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitTag {
    Train,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub true_class: usize,
    pub predicted_class: usize,
    pub dist: ProbVector,
}

impl PredictionRecord {
    /// Predicted class is the tie-broken argmax of `dist`.
    pub fn new(true_class: usize, dist: ProbVector) -> Self {
        PredictionRecord { true_class, predicted_class: dist.argmax(), dist }
    }

    pub fn is_correct(&self) -> bool {
        self.true_class == self.predicted_class
    }
}

/// Predictions of one classifier on one split of one resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub dataset_name: String,
    pub classifier_name: String,
    pub resample_id: u64,
    pub split: SplitTag,
    pub params: String,
    pub train_estimate: f64,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    /// Checks the record invariants: non-empty, one class count, valid
    /// distributions, predictions equal to the argmax, estimate in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .records
            .first()
            .ok_or_else(|| Error::InvalidArgument("prediction set has no records".into()))?;
        let c = first.dist.len();
        if !(0.0..=1.0).contains(&self.train_estimate) {
            return Err(Error::InvalidArgument(format!(
                "train estimate {} outside [0, 1]",
                self.train_estimate
            )));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.dist.len() != c {
                return Err(Error::DimensionMismatch { expected: c, found: r.dist.len() });
            }
            if r.true_class >= c {
                return Err(Error::InvalidArgument(format!("record {i}: class {} >= {c}", r.true_class)));
            }
            if r.predicted_class != r.dist.argmax() {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: predicted class {} is not the argmax of its distribution",
                    r.predicted_class
                )));
            }
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.records.first().map_or(0, |r| r.dist.len())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        accuracy(&self.records)
    }

    /// Same records rounded to results-file precision.
    pub fn quantized(&self) -> PredictionSet {
        PredictionSet {
            train_estimate: quantize(self.train_estimate),
            records: self
                .records
                .iter()
                .map(|r| PredictionRecord::new(r.true_class, r.dist.quantized()))
                .collect(),
            ..self.clone()
        }
    }
}

/// Rounds to six decimals exactly as printing with `{:.6}` and parsing back.
pub fn quantize(x: f64) -> f64 {
    format!("{x:.6}").parse().unwrap_or(x)
}

fn accuracy(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64
}

/// How component outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CombineMode {
    /// Weighted sum of the distributions.
    #[default]
    Probability,
    /// Weighted vote of each component's predicted class.
    Prediction,
}

/// Weighted combination of component distributions, normalized by the sum.
///
/// Weights enter as `(w_i / max w)^alpha`, which leaves the result unchanged
/// under scaling of the weights and avoids underflow at large `alpha`. With
/// `alpha = 0` every component counts equally, zero-weight ones included.
pub fn combine(weights: &[f64], alpha: f64, dists: &[&ProbVector], mode: CombineMode) -> Result<ProbVector> {
    if dists.is_empty() || weights.len() != dists.len() {
        return Err(Error::DimensionMismatch { expected: dists.len().max(1), found: weights.len() });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let c = dists[0].len();
    if let Some(d) = dists.iter().find(|d| d.len() != c) {
        return Err(Error::DimensionMismatch { expected: c, found: d.len() });
    }
    let effective: Vec<f64> = if alpha == 0.0 {
        vec![1.0; weights.len()]
    } else {
        let top = weights.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            return Err(Error::Degenerate("all component weights are zero".into()));
        }
        weights.iter().map(|w| powf(w / top, alpha)).collect()
    };
    let mut out = vec![0.0; c];
    for (e, d) in effective.iter().zip(dists) {
        match mode {
            CombineMode::Probability => {
                for (o, q) in out.iter_mut().zip(d.as_slice()) {
                    *o += e * q;
                }
            }
            CombineMode::Prediction => out[d.argmax()] += e,
        }
    }
    ProbVector::from_weights(out)
}

/// Out-of-fold predictions of `learner` over `data`, in instance order.
pub fn cross_validate<L: Learner + ?Sized>(
    learner: &L,
    data: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<PredictionRecord>> {
    cross_validate_on(learner, data, &stratified_folds(data, folds, seed)?)
}

/// Out-of-fold predictions over a given fold partition.
pub fn cross_validate_on<L: Learner + ?Sized>(
    learner: &L,
    data: &Dataset,
    folds: &[Vec<usize>],
) -> Result<Vec<PredictionRecord>> {
    let mut out: Vec<Option<PredictionRecord>> = vec![None; data.n()];
    for held_out in folds {
        let train = data.subset(&complement(held_out, data.n()))?;
        let model = learner.fit(&train)?;
        for &i in held_out {
            let dist = model.predict_distribution(data.row(i))?;
            out[i] = Some(PredictionRecord::new(data.label(i), dist));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::InvalidArgument(format!("instance {i} in no fold"))))
        .collect()
}

/// Stratified cross-validation accuracy of `learner` on `data`.
pub fn estimate_weight<L: Learner + ?Sized>(learner: &L, data: &Dataset, folds: usize, seed: u64) -> Result<f64> {
    Ok(accuracy(&cross_validate(learner, data, folds, seed)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HescaConfig {
    pub alpha: f64,
    pub folds: usize,
    /// Seed of the fold partition shared by all components.
    pub seed: u64,
    pub mode: CombineMode,
}

impl Default for HescaConfig {
    fn default() -> Self {
        HescaConfig { alpha: 4.0, folds: 10, seed: 0, mode: CombineMode::Probability }
    }
}

#[derive(Debug, Clone)]
pub struct HescaModel {
    pub components: Vec<Model>,
    pub names: Vec<String>,
    /// Cross-validation accuracy of each component.
    pub weights: Vec<f64>,
    pub alpha: f64,
    pub mode: CombineMode,
    /// Accuracy of the ensemble over the components' out-of-fold predictions.
    pub train_estimate: f64,
    /// Out-of-fold predictions of each component, in instance order.
    pub component_cv: Vec<Vec<PredictionRecord>>,
}

/// Estimates each component's weight by cross validation on `train`, then
/// retrains every component on all of `train`.
pub fn build_hesca<L: Learner>(learners: &[L], train: &Dataset, config: &HescaConfig) -> Result<HescaModel> {
    if learners.is_empty() {
        return Err(Error::InvalidArgument("ensemble needs at least one component".into()));
    }
    let folds = stratified_folds(train, config.folds, config.seed)?;
    let mut component_cv = Vec::with_capacity(learners.len());
    let mut weights = Vec::with_capacity(learners.len());
    let mut components = Vec::with_capacity(learners.len());
    for learner in learners {
        let cv = cross_validate_on(learner, train, &folds)?;
        weights.push(accuracy(&cv));
        component_cv.push(cv);
        components.push(learner.fit(train)?);
    }
    let mut model = HescaModel {
        components,
        names: learners.iter().map(Learner::name).collect(),
        weights,
        alpha: config.alpha,
        mode: config.mode,
        train_estimate: 0.0,
        component_cv,
    };
    model.train_estimate = model.cv_records()?.iter().filter(|r| r.is_correct()).count() as f64 / train.n() as f64;
    Ok(model)
}

impl HescaModel {
    fn quantized_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| quantize(*w)).collect()
    }

    /// Ensemble predictions over the components' out-of-fold predictions.
    pub fn cv_records(&self) -> Result<Vec<PredictionRecord>> {
        let weights = self.quantized_weights();
        let n = self.component_cv[0].len();
        (0..n)
            .map(|i| {
                let dists: Vec<ProbVector> = self.component_cv.iter().map(|cv| cv[i].dist.quantized()).collect();
                let refs: Vec<&ProbVector> = dists.iter().collect();
                let p = combine(&weights, self.alpha, &refs, self.mode)?;
                Ok(PredictionRecord::new(self.component_cv[0][i].true_class, p))
            })
            .collect()
    }

    pub fn predict_distribution(&self, x: &[f64]) -> Result<ProbVector> {
        let dists = self
            .components
            .iter()
            .map(|m| Ok(m.predict_distribution(x)?.quantized()))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&ProbVector> = dists.iter().collect();
        combine(&self.quantized_weights(), self.alpha, &refs, self.mode)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_distribution(x)?.argmax())
    }

    /// The same trained components combined with another exponent.
    pub fn with_alpha(&self, alpha: f64) -> HescaModel {
        HescaModel { alpha, ..self.clone() }
    }

    /// Index of the component with the largest weight (lowest on ties).
    pub fn best_component(&self) -> usize {
        argmax_first(&self.weights)
    }
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Index and weight of the best of `weights`, ties toward the lowest index.
pub fn pick_best_of(weights: &[f64]) -> Result<(usize, f64)> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("no candidates to pick from".into()));
    }
    let i = argmax_first(weights);
    Ok((i, weights[i]))
}

/// Picks the learner with the highest cross-validation accuracy on `train`
/// over one shared fold partition.
pub fn pick_best<L: Learner>(learners: &[L], train: &Dataset, folds: usize, seed: u64) -> Result<(usize, f64)> {
    let partition = stratified_folds(train, folds, seed)?;
    let weights = learners
        .iter()
        .map(|l| Ok(accuracy(&cross_validate_on(l, train, &partition)?)))
        .collect::<Result<Vec<_>>>()?;
    pick_best_of(&weights)
}

/// Stored out-of-fold train predictions and test predictions of one
/// component on one resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentResults {
    pub train: PredictionSet,
    pub test: PredictionSet,
}

fn check_aligned(sets: &[&PredictionSet]) -> Result<()> {
    let first = sets[0];
    for s in &sets[1..] {
        if s.dataset_name != first.dataset_name || s.resample_id != first.resample_id || s.split != first.split {
            return Err(Error::Alignment(format!(
                "{} ({} resample {}) does not match {} ({} resample {})",
                s.classifier_name, s.dataset_name, s.resample_id, first.classifier_name, first.dataset_name, first.resample_id
            )));
        }
        if s.records.len() != first.records.len() {
            return Err(Error::Alignment(format!(
                "{} has {} records, {} has {}",
                s.classifier_name,
                s.records.len(),
                first.classifier_name,
                first.records.len()
            )));
        }
        if s.class_count() != first.class_count() {
            return Err(Error::Alignment(format!("{} has a different class count", s.classifier_name)));
        }
        if let Some(i) = s.records.iter().zip(&first.records).position(|(a, b)| a.true_class != b.true_class) {
            return Err(Error::Alignment(format!(
                "true class mismatch at record {i} between {} and {}",
                s.classifier_name, first.classifier_name
            )));
        }
    }
    Ok(())
}

fn combine_sets(
    sets: &[&PredictionSet],
    weights: &[f64],
    alpha: f64,
    mode: CombineMode,
    name: &str,
) -> Result<PredictionSet> {
    check_aligned(sets)?;
    let records = (0..sets[0].records.len())
        .map(|i| {
            let dists: Vec<ProbVector> = sets.iter().map(|s| s.records[i].dist.quantized()).collect();
            let refs: Vec<&ProbVector> = dists.iter().collect();
            Ok(PredictionRecord::new(sets[0].records[i].true_class, combine(weights, alpha, &refs, mode)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionSet {
        dataset_name: sets[0].dataset_name.clone(),
        classifier_name: name.to_string(),
        resample_id: sets[0].resample_id,
        split: sets[0].split,
        params: format!("alpha={alpha},components={}", sets.iter().map(|s| s.classifier_name.as_str()).collect::<Vec<_>>().join("+")),
        train_estimate: 0.0,
        records,
    })
}

/// Builds an ensemble from stored component results without retraining.
///
/// Each component's stored train estimate is its weight. The ensemble's
/// train estimate is the accuracy of combining the stored out-of-fold train
/// predictions.
pub fn compose_from_results(
    components: &[ComponentResults],
    alpha: f64,
    mode: CombineMode,
    name: &str,
) -> Result<ComponentResults> {
    if components.is_empty() {
        return Err(Error::InvalidArgument("no component results".into()));
    }
    let weights: Vec<f64> = components.iter().map(|c| quantize(c.train.train_estimate)).collect();
    let train_sets: Vec<&PredictionSet> = components.iter().map(|c| &c.train).collect();
    let test_sets: Vec<&PredictionSet> = components.iter().map(|c| &c.test).collect();
    let mut train = combine_sets(&train_sets, &weights, alpha, mode, name)?;
    let mut test = combine_sets(&test_sets, &weights, alpha, mode, name)?;
    let estimate = train.accuracy();
    train.train_estimate = estimate;
    test.train_estimate = estimate;
    Ok(ComponentResults { train, test })
}

/// Pick-best over stored results: the component with the highest stored
/// train estimate, ties toward the first.
pub fn pick_best_from_results(components: &[ComponentResults]) -> Result<&ComponentResults> {
    let weights: Vec<f64> = components.iter().map(|c| c.train.train_estimate).collect();
    Ok(&components[pick_best_of(&weights)?.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::with_counts;
    use crate::learners::testutil::blobs;
    use crate::learners::ClassifierSpec;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    fn close(a: &ProbVector, b: &[f64], tol: f64) -> bool {
        a.as_slice().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn combine_examples() {
        let (a, b) = (pv(&[0.8, 0.2]), pv(&[0.3, 0.7]));
        let p = combine(&[0.9, 0.6], 1.0, &[&a, &b], CombineMode::Probability).unwrap();
        assert!(close(&p, &[0.6, 0.4], 1e-12), "{p:?}");
        let p = combine(&[0.9, 0.6], 0.0, &[&a, &b], CombineMode::Probability).unwrap();
        assert!(close(&p, &[0.55, 0.45], 1e-12));
        let p = combine(&[0.9, 0.6], 1e4, &[&a, &b], CombineMode::Probability).unwrap();
        assert!(close(&p, &[0.8, 0.2], 1e-6));
        let p = combine(&[0.9, 0.6], 1.0, &[&a, &b], CombineMode::Prediction).unwrap();
        assert!(close(&p, &[0.6, 0.4], 1e-12));
    }

    #[test]
    fn combine_zero_weights() {
        let (a, b) = (pv(&[0.8, 0.2]), pv(&[0.3, 0.7]));
        assert!(matches!(combine(&[0.0, 0.0], 4.0, &[&a, &b], CombineMode::Probability), Err(Error::Degenerate(_))));
        let p = combine(&[0.0, 0.0], 0.0, &[&a, &b], CombineMode::Probability).unwrap();
        assert!(close(&p, &[0.55, 0.45], 1e-12));
        let p = combine(&[0.5, 0.0], 2.0, &[&a, &b], CombineMode::Probability).unwrap();
        assert!(close(&p, &[0.8, 0.2], 0.0));
    }

    #[test]
    fn estimate_weight_examples() {
        let d = with_counts("maj", &[7, 3]);
        let w = estimate_weight(&ClassifierSpec::zero_r(0), &d, 10, 1).unwrap();
        assert_eq!(w, 0.7);

        // every instance has a duplicate, so 1-NN always finds its twin
        let base = blobs(6, 2, 2, 1.0, 3);
        let rows: Vec<Vec<f64>> = base.rows().chain(base.rows()).map(<[f64]>::to_vec).collect();
        let labels: Vec<usize> = base.labels().iter().chain(base.labels()).copied().collect();
        let d = Dataset::new("dup", base.attribute_names().to_vec(), base.class_names().to_vec(), rows, labels).unwrap();
        let folds = stratified_folds(&d, 2, 1).unwrap();
        // twins must land in different folds for the example to apply
        let twins_split = (0..base.n()).all(|i| folds.iter().any(|f| f.contains(&i) != f.contains(&(i + base.n()))));
        if twins_split {
            assert_eq!(estimate_weight(&ClassifierSpec::nearest_neighbour(0), &d, 2, 1).unwrap(), 1.0);
        }
    }

    #[test]
    fn pick_best_examples() {
        assert_eq!(pick_best_of(&[0.7, 0.9, 0.8]).unwrap(), (1, 0.9));
        assert_eq!(pick_best_of(&[0.8, 0.8]).unwrap(), (0, 0.8));
        assert_eq!(pick_best_of(&[0.0, 0.0, 0.0]).unwrap(), (0, 0.0));
    }

    #[test]
    fn single_component_reproduces_its_distributions() {
        let d = blobs(10, 3, 2, 1.0, 4);
        let spec = ClassifierSpec::logistic(0);
        for alpha in [0.0, 1.0, 4.0, 50.0] {
            let config = HescaConfig { alpha, folds: 5, ..HescaConfig::default() };
            let h = build_hesca(std::slice::from_ref(&spec), &d, &config).unwrap();
            for row in d.rows() {
                let own = h.components[0].predict_distribution(row).unwrap().quantized();
                let ens = h.predict_distribution(row).unwrap();
                assert!(close(&ens, own.as_slice(), 1e-15));
            }
        }
    }

    #[test]
    fn compose_single_set_is_identity() {
        let d = blobs(8, 2, 2, 1.0, 4);
        let h = build_hesca(&[ClassifierSpec::c45(0)], &d, &HescaConfig { folds: 4, ..HescaConfig::default() }).unwrap();
        let set = |split, records: Vec<PredictionRecord>| PredictionSet {
            dataset_name: "blobs".into(),
            classifier_name: "C4.5".into(),
            resample_id: 0,
            split,
            params: String::new(),
            train_estimate: h.weights[0],
            records,
        };
        let train = set(SplitTag::Train, h.component_cv[0].clone()).quantized();
        let test = train.clone();
        let out = compose_from_results(&[ComponentResults { train: train.clone(), test: test.clone() }], 4.0, CombineMode::Probability, "H").unwrap();
        assert_eq!(out.test.records, test.records);
        assert_eq!(out.train.train_estimate, h.train_estimate);
    }

    #[test]
    fn compose_detects_misalignment() {
        let rec = |t| PredictionRecord::new(t, pv(&[0.5, 0.5]));
        let mk = |records| PredictionSet {
            dataset_name: "d".into(),
            classifier_name: "x".into(),
            resample_id: 0,
            split: SplitTag::Test,
            params: String::new(),
            train_estimate: 0.5,
            records,
        };
        let a = ComponentResults { train: mk(vec![rec(0), rec(1)]), test: mk(vec![rec(0), rec(1)]) };
        let b = ComponentResults { train: mk(vec![rec(0), rec(1)]), test: mk(vec![rec(1), rec(1)]) };
        let c = ComponentResults { train: mk(vec![rec(0)]), test: mk(vec![rec(0), rec(1)]) };
        assert!(matches!(compose_from_results(&[a.clone(), b], 4.0, CombineMode::Probability, "H"), Err(Error::Alignment(_))));
        assert!(matches!(compose_from_results(&[a, c], 4.0, CombineMode::Probability, "H"), Err(Error::Alignment(_))));
    }
}
