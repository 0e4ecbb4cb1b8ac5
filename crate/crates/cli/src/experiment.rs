//! Experiment runner: component predictions per (dataset, classifier,
//! resample), ensembles composed from the stored component files, and a
//! summary read back from the files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hesca_core::data::stratified_folds;
use hesca_core::ensemble::{cross_validate_on, pick_best_from_results};
use hesca_core::metrics::MetricReport;
use hesca_core::rng::derive_seed;
use hesca_core::stats::ResultsMatrix;
use hesca_core::{
    compose_from_results, stratified_resample, CombineMode, ComponentResults, Dataset, Learner, PredictionRecord,
    PredictionSet, Split, SplitTag,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Component, ComponentDef, EnsembleDef, EnsembleKind, ExperimentConfig};
use crate::data_io::load_dataset;
use crate::results::{read_results, results_path, write_results};

/// Seed of the learner for one task.
pub fn task_seed(dataset: &str, classifier: &str, resample: u64) -> u64 {
    derive_seed(&format!("{dataset}/{classifier}"), resample)
}

/// Seed of the fold partition every component of one resample shares.
pub fn fold_seed(dataset: &str, resample: u64) -> u64 {
    derive_seed(&format!("{dataset}/folds"), resample)
}

fn accuracy(records: &[PredictionRecord]) -> f64 {
    records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64
}

fn prediction_set(dataset: &str, classifier: &str, resample: u64, split: SplitTag, params: &str, est: f64, records: Vec<PredictionRecord>) -> PredictionSet {
    PredictionSet {
        dataset_name: dataset.into(),
        classifier_name: classifier.into(),
        resample_id: resample,
        split,
        params: params.into(),
        train_estimate: est,
        records,
    }
}

/// Trains one component on one resample. The train file holds out-of-fold
/// predictions on the shared partition (on the search partition for tuned
/// components); the test file holds predictions of the model trained on all
/// of the train split.
pub fn run_component(component: &Component, split: &Split, dataset: &str, folds: usize) -> Result<ComponentResults> {
    let r = split.resample_id;
    let seed = task_seed(dataset, &component.name, r);
    let train = &split.train;
    let (records, estimate, params, model) = match &component.def {
        ComponentDef::Spec(spec) => {
            let spec = spec.clone().with_seed(seed);
            let partition = stratified_folds(train, folds, fold_seed(dataset, r))?;
            let cv = cross_validate_on(&spec, train, &partition)?;
            let est = accuracy(&cv);
            (cv, est, spec.describe(), spec.fit(train)?)
        }
        ComponentDef::Tuned(t) => {
            let mut t = t.clone();
            t.base.seed = seed;
            let (search, spec) = t.tune(train)?;
            let cv = cross_validate_on(&spec, train, &search.partition(train)?)?;
            let params = format!("{};chosen={}", t.describe(), search.chosen.describe());
            (cv, search.train_estimate, params, spec.fit(train)?)
        }
    };
    let test = split
        .test
        .rows()
        .zip(split.test.labels())
        .map(|(x, &y)| Ok(PredictionRecord::new(y, model.predict_distribution(x)?)))
        .collect::<hesca_core::Result<Vec<_>>>()?;
    Ok(quantized(ComponentResults {
        train: prediction_set(dataset, &component.name, r, SplitTag::Train, &params, estimate, records),
        test: prediction_set(dataset, &component.name, r, SplitTag::Test, &params, estimate, test),
    }))
}

fn quantized(results: ComponentResults) -> ComponentResults {
    ComponentResults { train: results.train.quantized(), test: results.test.quantized() }
}

/// Composes an ensemble from its components' results.
pub fn compose(def: &EnsembleDef, components: &[ComponentResults], alpha: f64, mode: CombineMode) -> Result<ComponentResults> {
    match def.kind {
        EnsembleKind::Hesca => {
            let mut out = compose_from_results(components, alpha, mode, &def.name)?;
            let mode = match mode {
                CombineMode::Probability => "probability",
                CombineMode::Prediction => "prediction",
            };
            for set in [&mut out.train, &mut out.test] {
                set.params = format!("{},mode={mode}", set.params);
            }
            Ok(quantized(out))
        }
        EnsembleKind::PickBest => {
            let best = pick_best_from_results(components)?;
            let mut out = best.clone();
            for set in [&mut out.train, &mut out.test] {
                set.params = format!("pickBest,chosen={},from={}", set.classifier_name, def.components.join("+"));
                set.classifier_name = def.name.clone();
            }
            Ok(out)
        }
    }
}

/// Reading and writing the results files under one root directory.
#[derive(Debug, Clone)]
pub struct ResultStore {
    pub root: PathBuf,
}

impl ResultStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultStore { root: root.into() }
    }

    pub fn path(&self, classifier: &str, dataset: &str, split: SplitTag, resample: u64) -> PathBuf {
        results_path(&self.root, classifier, dataset, split, resample)
    }

    pub fn read(&self, classifier: &str, dataset: &str, resample: u64) -> Result<ComponentResults> {
        let read = |split| {
            let path = self.path(classifier, dataset, split, resample);
            let set = read_results(&path).with_context(|| format!("reading {}", path.display()))?;
            if set.classifier_name != classifier || set.dataset_name != dataset || set.resample_id != resample || set.split != split {
                bail!("{}: header does not match its location", path.display());
            }
            Ok(set)
        };
        Ok(ComponentResults { train: read(SplitTag::Train)?, test: read(SplitTag::Test)? })
    }

    pub fn write(&self, results: &ComponentResults) -> Result<()> {
        for set in [&results.train, &results.test] {
            let path = self.path(&set.classifier_name, &set.dataset_name, set.split, set.resample_id);
            write_results(set, &path)?;
        }
        Ok(())
    }

    pub fn exists(&self, classifier: &str, dataset: &str, resample: u64) -> bool {
        [SplitTag::Train, SplitTag::Test].iter().all(|&s| self.path(classifier, dataset, s, resample).is_file())
    }

    /// Every `(classifier, dataset) -> resamples` with a test file on disk.
    pub fn scan(&self) -> Result<BTreeMap<String, BTreeMap<String, BTreeSet<u64>>>> {
        let mut out: BTreeMap<String, BTreeMap<String, BTreeSet<u64>>> = BTreeMap::new();
        let dirs = |p: &Path| -> Result<Vec<(String, PathBuf)>> {
            let mut v = Vec::new();
            for entry in fs::read_dir(p).with_context(|| format!("listing {}", p.display()))? {
                let entry = entry?;
                if entry.file_type()?.is_dir() {
                    if let Some(name) = entry.file_name().to_str() {
                        v.push((name.to_string(), entry.path()));
                    }
                }
            }
            Ok(v)
        };
        for (classifier, cdir) in dirs(&self.root)? {
            let preds = cdir.join("Predictions");
            if !preds.is_dir() {
                continue;
            }
            for (dataset, ddir) in dirs(&preds)? {
                for entry in fs::read_dir(&ddir)? {
                    let name = entry?.file_name();
                    let resample = name
                        .to_str()
                        .and_then(|n| n.strip_prefix("testFold"))
                        .and_then(|n| n.strip_suffix(".csv"))
                        .and_then(|n| n.parse::<u64>().ok());
                    if let Some(r) = resample {
                        out.entry(classifier.clone()).or_default().entry(dataset.clone()).or_default().insert(r);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub dataset: String,
    pub classifier: String,
    pub resample: u64,
    pub train_size: usize,
    pub classes: usize,
    pub error: f64,
    pub balanced_error: f64,
    pub nll: f64,
    pub auroc: f64,
    pub bias: f64,
    pub train_estimate: f64,
}

impl CellMetrics {
    /// Statistics of one stored cell; class proportions come from the true
    /// classes of the train file.
    pub fn compute(results: &ComponentResults) -> Result<Self> {
        let c = results.test.class_count();
        let mut counts = vec![0usize; c];
        for r in &results.train.records {
            *counts.get_mut(r.true_class).ok_or_else(|| anyhow!("train class {} out of range", r.true_class))? += 1;
        }
        let n = results.train.records.len() as f64;
        let proportions: Vec<f64> = counts.iter().map(|&k| k as f64 / n).collect();
        let m = MetricReport::compute(&results.test, &proportions)?;
        Ok(CellMetrics {
            dataset: results.test.dataset_name.clone(),
            classifier: results.test.classifier_name.clone(),
            resample: results.test.resample_id,
            train_size: results.train.records.len(),
            classes: c,
            error: m.error,
            balanced_error: m.balanced_error,
            nll: m.nll_mean,
            auroc: m.auroc,
            bias: m.bias.unwrap_or(0.0),
            train_estimate: results.test.train_estimate,
        })
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Error => self.error,
            Metric::BalancedError => self.balanced_error,
            Metric::Nll => self.nll,
            Metric::Auroc => self.auroc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Error,
    BalancedError,
    Nll,
    Auroc,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Error, Metric::BalancedError, Metric::Nll, Metric::Auroc];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Error => "error",
            Metric::BalancedError => "balanced-error",
            Metric::Nll => "nll",
            Metric::Auroc => "auroc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn higher_is_better(self) -> bool {
        self == Metric::Auroc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingCell {
    pub dataset: String,
    pub classifier: String,
    pub resample: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub dataset: String,
    pub classifier: String,
    pub resamples: usize,
    pub error: f64,
    pub balanced_error: f64,
    pub nll: f64,
    pub auroc: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub metric: Metric,
    pub classifiers: Vec<String>,
    pub average_ranks: Vec<f64>,
    /// Datasets on which every classifier has every resample.
    pub datasets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub datasets: Vec<String>,
    pub classifiers: Vec<String>,
    pub resamples: u64,
    pub cells: Vec<CellMetrics>,
    pub missing: Vec<MissingCell>,
    pub means: Vec<MeanRow>,
    pub ranks: Vec<RankTable>,
}

impl RunSummary {
    pub fn cell(&self, dataset: &str, classifier: &str, resample: u64) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.dataset == dataset && c.classifier == classifier && c.resample == resample)
    }

    pub fn mean(&self, dataset: &str, classifier: &str) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.dataset == dataset && m.classifier == classifier)
    }
}

/// Loads the configured datasets and runs the experiment on them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    if cfg.datasets.is_empty() {
        bail!("no datasets configured");
    }
    let datasets = cfg
        .datasets
        .iter()
        .map(|p| load_dataset(p, cfg.class_col.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    run_on(&datasets, cfg)
}

/// Runs every task of `cfg` on `datasets`, writes the results files, the
/// ensembles composed from them and `summary.json` / `summary.csv`.
pub fn run_on(datasets: &[Dataset], cfg: &ExperimentConfig) -> Result<RunSummary> {
    let mut seen = BTreeSet::new();
    for d in datasets {
        if !seen.insert(d.name()) {
            bail!("two datasets are named {}", d.name());
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let store = ResultStore::new(&cfg.output);
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;

    let splits: Vec<Vec<Result<Split, String>>> = datasets
        .iter()
        .map(|d| {
            (0..cfg.resamples)
                .map(|r| stratified_resample(d, r, cfg.train_proportion).map_err(|e| e.to_string()))
                .collect()
        })
        .collect();

    let tasks: Vec<(usize, usize, u64)> = (0..datasets.len())
        .flat_map(|d| (0..cfg.components.len()).flat_map(move |c| (0..cfg.resamples).map(move |r| (d, c, r))))
        .collect();
    let mut missing: Vec<MissingCell> = pool.install(|| {
        tasks
            .par_iter()
            .filter_map(|&(d, c, r)| {
                let name = datasets[d].name();
                let comp = &cfg.components[c];
                let outcome = (|| -> Result<()> {
                    if !cfg.overwrite && store.exists(&comp.name, name, r) && store.read(&comp.name, name, r).is_ok() {
                        log::debug!("{name}/{}/{r}: reusing stored results", comp.name);
                        return Ok(());
                    }
                    let split = splits[d][r as usize].as_ref().map_err(|e| anyhow!("resample failed: {e}"))?;
                    let results = run_component(comp, split, name, cfg.folds)?;
                    store.write(&results)?;
                    log::info!("{name}/{}/{r}: test accuracy {:.4}", comp.name, results.test.accuracy());
                    Ok(())
                })();
                outcome.err().map(|e| {
                    log::warn!("{name}/{}/{r} failed: {e:#}", comp.name);
                    MissingCell { dataset: name.into(), classifier: comp.name.clone(), resample: r, reason: format!("{e:#}") }
                })
            })
            .collect()
    });

    let ens_tasks: Vec<(usize, usize, u64)> = (0..datasets.len())
        .flat_map(|d| (0..cfg.ensembles.len()).flat_map(move |e| (0..cfg.resamples).map(move |r| (d, e, r))))
        .collect();
    let ens_missing: Vec<MissingCell> = pool.install(|| {
        ens_tasks
            .par_iter()
            .filter_map(|&(d, e, r)| {
                let name = datasets[d].name();
                let def = &cfg.ensembles[e];
                let outcome = (|| -> Result<()> {
                    let comps = def
                        .components
                        .iter()
                        .map(|c| store.read(c, name, r).map_err(|_| anyhow!("component {c} has no results")))
                        .collect::<Result<Vec<_>>>()?;
                    store.write(&compose(def, &comps, cfg.alpha, cfg.mode)?)
                })();
                outcome.err().map(|e| MissingCell { dataset: name.into(), classifier: def.name.clone(), resample: r, reason: format!("{e:#}") })
            })
            .collect()
    });
    missing.extend(ens_missing);

    let names: Vec<String> = datasets.iter().map(|d| d.name().to_string()).collect();
    let summary = summarize(&store, &names, &cfg.classifier_names(), cfg.resamples, missing)?;
    write_summary(&summary, &cfg.output)?;
    Ok(summary)
}

/// Reads every cell back from disk and aggregates the statistics.
pub fn summarize(
    store: &ResultStore,
    datasets: &[String],
    classifiers: &[String],
    resamples: u64,
    mut missing: Vec<MissingCell>,
) -> Result<RunSummary> {
    let mut cells = Vec::new();
    for d in datasets {
        for c in classifiers {
            for r in 0..resamples {
                if missing.iter().any(|m| &m.dataset == d && &m.classifier == c && m.resample == r) {
                    continue;
                }
                match store.read(c, d, r).and_then(|res| CellMetrics::compute(&res)) {
                    Ok(cell) => cells.push(cell),
                    Err(e) => missing.push(MissingCell { dataset: d.clone(), classifier: c.clone(), resample: r, reason: format!("{e:#}") }),
                }
            }
        }
    }
    let rank = |m: &MissingCell| {
        (
            datasets.iter().position(|d| *d == m.dataset),
            classifiers.iter().position(|c| *c == m.classifier),
            m.resample,
        )
    };
    missing.sort_by_key(rank);

    let mut means = Vec::new();
    for d in datasets {
        for c in classifiers {
            let of: Vec<&CellMetrics> = cells.iter().filter(|x| &x.dataset == d && &x.classifier == c).collect();
            if of.is_empty() {
                continue;
            }
            let avg = |f: fn(&CellMetrics) -> f64| of.iter().map(|x| f(x)).sum::<f64>() / of.len() as f64;
            means.push(MeanRow {
                dataset: d.clone(),
                classifier: c.clone(),
                resamples: of.len(),
                error: avg(|x| x.error),
                balanced_error: avg(|x| x.balanced_error),
                nll: avg(|x| x.nll),
                auroc: avg(|x| x.auroc),
                bias: avg(|x| x.bias),
            });
        }
    }

    let complete: Vec<String> = datasets
        .iter()
        .filter(|d| classifiers.iter().all(|c| means.iter().any(|m| &m.dataset == *d && &m.classifier == c && m.resamples as u64 == resamples)))
        .cloned()
        .collect();
    let mut ranks = Vec::new();
    if !complete.is_empty() && classifiers.len() >= 2 {
        for metric in Metric::ALL {
            let rows: Vec<Vec<f64>> = complete
                .iter()
                .map(|d| {
                    classifiers
                        .iter()
                        .map(|c| {
                            let cell: Vec<&CellMetrics> = cells.iter().filter(|x| &x.dataset == d && &x.classifier == c).collect();
                            cell.iter().map(|x| x.metric(metric)).sum::<f64>() / cell.len() as f64
                        })
                        .collect()
                })
                .collect();
            let m = ResultsMatrix::from_rows(&rows, metric.higher_is_better())?;
            ranks.push(RankTable {
                metric,
                classifiers: classifiers.to_vec(),
                average_ranks: m.average_ranks(),
                datasets: complete.clone(),
            });
        }
    }
    Ok(RunSummary {
        datasets: datasets.to_vec(),
        classifiers: classifiers.to_vec(),
        resamples,
        cells,
        missing,
        means,
        ranks,
    })
}

pub fn write_summary(summary: &RunSummary, dir: &Path) -> Result<()> {
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    let mut csv = String::from("dataset,classifier,resample,trainSize,classes,error,balancedError,nll,auroc,bias,trainEstimate\n");
    for c in &summary.cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            csv_field(&c.dataset),
            csv_field(&c.classifier),
            c.resample,
            c.train_size,
            c.classes,
            c.error,
            c.balanced_error,
            c.nll,
            c.auroc,
            c.bias,
            c.train_estimate
        ));
    }
    for m in &summary.missing {
        csv.push_str(&format!("{},{},{},,,,,,,,\n", csv_field(&m.dataset), csv_field(&m.classifier), m.resample));
    }
    fs::write(dir.join("summary.csv"), csv)?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row of an alpha sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    /// Mean over datasets of the mean test accuracy over resamples.
    pub mean_accuracy: f64,
    pub datasets: usize,
}

/// Recombines stored component results under each exponent in `alphas`.
/// Only `(dataset, resample)` cells where every component has results are
/// used.
pub fn sweep_alpha(store: &ResultStore, components: &[String], alphas: &[f64], mode: CombineMode) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        bail!("no alpha values given");
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        bail!("alpha {a} must be finite and >= 0");
    }
    let cells = complete_cells(store, components)?;
    if cells.is_empty() {
        bail!("no dataset has results for every component");
    }
    let loaded: BTreeMap<&String, Vec<Vec<ComponentResults>>> = cells
        .iter()
        .map(|(d, rs)| {
            let per = rs
                .iter()
                .map(|&r| components.iter().map(|c| store.read(c, d, r)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Ok((d, per))
        })
        .collect::<Result<_>>()?;
    let def = EnsembleDef { name: "sweep".into(), kind: EnsembleKind::Hesca, components: components.to_vec() };
    alphas
        .iter()
        .map(|&alpha| {
            let mut total = 0.0;
            for per in loaded.values() {
                let mut acc = 0.0;
                for comps in per {
                    acc += compose(&def, comps, alpha, mode)?.test.accuracy();
                }
                total += acc / per.len() as f64;
            }
            Ok(SweepRow { alpha, mean_accuracy: total / loaded.len() as f64, datasets: loaded.len() })
        })
        .collect()
}

/// `dataset -> resamples` on which every one of `classifiers` has results.
pub fn complete_cells(store: &ResultStore, classifiers: &[String]) -> Result<BTreeMap<String, Vec<u64>>> {
    let scan = store.scan()?;
    let Some(first) = classifiers.first() else { bail!("no classifiers given") };
    let mut out = BTreeMap::new();
    for (d, rs) in scan.get(first).into_iter().flatten() {
        let common: Vec<u64> = rs
            .iter()
            .copied()
            .filter(|r| classifiers.iter().all(|c| scan.get(c).and_then(|m| m.get(d)).is_some_and(|s| s.contains(r))))
            .collect();
        if !common.is_empty() {
            out.insert(d.clone(), common);
        }
    }
    Ok(out)
}

/// Composes `def` on every cell where all its components have results and
/// writes the ensemble's files. Returns the cells written and those skipped.
pub fn compose_directory(
    store: &ResultStore,
    out: &ResultStore,
    def: &EnsembleDef,
    alpha: f64,
    mode: CombineMode,
) -> Result<(usize, Vec<MissingCell>)> {
    let scan = store.scan()?;
    let mut keys: BTreeSet<(String, u64)> = BTreeSet::new();
    for c in &def.components {
        let of = scan.get(c).ok_or_else(|| anyhow!("no results for component {c}"))?;
        for (d, rs) in of {
            keys.extend(rs.iter().map(|&r| (d.clone(), r)));
        }
    }
    let mut written = 0;
    let mut skipped = Vec::new();
    for (d, r) in keys {
        let composed = def
            .components
            .iter()
            .map(|c| store.read(c, &d, r))
            .collect::<Result<Vec<_>>>()
            .and_then(|comps| compose(def, &comps, alpha, mode));
        match composed {
            Ok(res) => {
                out.write(&res)?;
                written += 1;
            }
            Err(e) => skipped.push(MissingCell { dataset: d, classifier: def.name.clone(), resample: r, reason: format!("{e:#}") }),
        }
    }
    Ok((written, skipped))
}

/// Learners of `cfg`'s components seeded exactly as the runner seeds them.
pub fn seeded_learners(cfg: &ExperimentConfig, names: &[&str], dataset: &str, resample: u64) -> Result<Vec<Box<dyn Learner>>> {
    names
        .iter()
        .map(|n| {
            let c = cfg.component(n).ok_or_else(|| anyhow!("no component {n}"))?;
            Ok(c.def.learner(task_seed(dataset, n, resample)))
        })
        .collect()
}
