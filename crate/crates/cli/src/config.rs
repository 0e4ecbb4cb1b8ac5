//! Experiment configuration: a `key = value` text file plus overrides.
//!
//! ```text
//! # lines starting with '#' are comments
//! datasets = data/iris.csv, data/wine.arff
//! classifiers = hesca, pick-best, ZeroR
//! resamples = 30
//! train_proportion = 0.5
//! alpha = 4
//! folds = 10
//! mode = probability            # or prediction
//! output = results
//! threads = 0                   # 0 uses every core
//! class_col = class
//! rbf_grid = desk               # or full (33 x 33)
//! dnn_budget = 20
//! overwrite = false
//! classifier.NB2 = gaussianNB   # a new component from a kind or a built-in name
//! param.MLP.epochs = 200        # override a component parameter
//! ensemble.HESCA+ZeroR = Logistic+C4.5+SVML+NN+MLP+ZeroR
//! pickbest.PickBest+ = RandF+RotF+SVMQ+DNN
//! ```
//!
//! Presets in `classifiers`: `hesca`, `hesca-plus`, `pick-best`, `tuned-rbf`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, ensure, Context, Result};
use hesca_core::learners::{ClassifierKind, ClassifierSpec, Learner};
use hesca_core::tuning::{apply_point, default_rbf_grid, desk_rbf_grid, ParamPoint, TunedLearner};
use hesca_core::CombineMode;

pub const HESCA_COMPONENTS: [&str; 5] = ["Logistic", "C4.5", "SVML", "NN", "MLP"];
pub const HESCA_PLUS_COMPONENTS: [&str; 4] = ["RandF", "RotF", "SVMQ", "DNN"];
pub const PRESETS: [&str; 4] = ["hesca", "hesca-plus", "pick-best", "tuned-rbf"];

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "HESCA_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentDef {
    Spec(ClassifierSpec),
    Tuned(TunedLearner),
}

impl ComponentDef {
    /// The learner with its seed set to `seed`.
    pub fn learner(&self, seed: u64) -> Box<dyn Learner> {
        match self {
            ComponentDef::Spec(s) => Box::new(s.clone().with_seed(seed)),
            ComponentDef::Tuned(t) => {
                let mut t = t.clone();
                t.base.seed = seed;
                Box::new(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub def: ComponentDef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    /// Weighted probability combination with the configured exponent.
    Hesca,
    /// The component with the highest train estimate.
    PickBest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDef {
    pub name: String,
    pub kind: EnsembleKind,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbfGrid {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub datasets: Vec<PathBuf>,
    pub class_col: Option<String>,
    pub components: Vec<Component>,
    pub ensembles: Vec<EnsembleDef>,
    pub resamples: u64,
    pub train_proportion: f64,
    pub alpha: f64,
    pub folds: usize,
    pub mode: CombineMode,
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub overwrite: bool,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn push(names: &mut Vec<String>, n: &str) {
    if !names.iter().any(|x| x == n) {
        names.push(n.to_string());
    }
}

fn list(v: &str, sep: char) -> Vec<String> {
    v.split(sep).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow!("{key}: cannot parse {v:?}"))
}

/// A built-in component by display name.
pub fn builtin_component(name: &str, grid: RbfGrid, dnn_budget: usize) -> Option<ComponentDef> {
    let spec = match name {
        "Logistic" => ClassifierSpec::logistic(0),
        "C4.5" => ClassifierSpec::c45(0),
        "SVML" => ClassifierSpec::svm_linear(0),
        "SVMQ" => ClassifierSpec::svm_quadratic(0),
        "NN" => ClassifierSpec::nearest_neighbour(0),
        "MLP" => ClassifierSpec::mlp(0),
        "RandF" => ClassifierSpec::random_forest(0),
        "RotF" => ClassifierSpec::rotation_forest(0),
        "ZeroR" => ClassifierSpec::zero_r(0),
        "NB" => ClassifierSpec::naive_bayes(0),
        "DNN" => return Some(ComponentDef::Tuned(TunedLearner::deep_mlp(dnn_budget, 0))),
        "TunedSVMRBF" => {
            let g = match grid {
                RbfGrid::Desk => desk_rbf_grid(),
                RbfGrid::Full => default_rbf_grid(),
            };
            return Some(ComponentDef::Tuned(TunedLearner::rbf_svm(g, 0)));
        }
        _ => return None,
    };
    Some(ComponentDef::Spec(spec))
}

fn preset(name: &str) -> Option<(Vec<&'static str>, Option<EnsembleDef>)> {
    let ens = |name: &str, kind, comps: &[&str]| EnsembleDef {
        name: name.into(),
        kind,
        components: comps.iter().map(|s| s.to_string()).collect(),
    };
    Some(match name {
        "hesca" => (HESCA_COMPONENTS.to_vec(), Some(ens("HESCA", EnsembleKind::Hesca, &HESCA_COMPONENTS))),
        "hesca-plus" => (HESCA_PLUS_COMPONENTS.to_vec(), Some(ens("HESCA+", EnsembleKind::Hesca, &HESCA_PLUS_COMPONENTS))),
        "pick-best" => (HESCA_COMPONENTS.to_vec(), Some(ens("PickBest", EnsembleKind::PickBest, &HESCA_COMPONENTS))),
        "tuned-rbf" => (vec!["TunedSVMRBF"], None),
        _ => return None,
    })
}

impl ExperimentConfig {
    /// Builds a config from `key = value` pairs; a later pair overrides an
    /// earlier one with the same key.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut scalar: BTreeMap<&str, &str> = BTreeMap::new();
        let mut custom: Vec<(String, String)> = Vec::new();
        let mut params: Vec<(String, String, f64)> = Vec::new();
        let mut ensembles: Vec<EnsembleDef> = Vec::new();
        for (k, v) in pairs {
            let (k, v) = (k.as_str(), v.as_str());
            if let Some(name) = k.strip_prefix("classifier.") {
                custom.retain(|(n, _)| n != name);
                custom.push((name.to_string(), v.to_string()));
            } else if let Some(rest) = k.strip_prefix("param.") {
                let (name, param) = rest.rsplit_once('.').ok_or_else(|| anyhow!("{k}: expected param.<classifier>.<name>"))?;
                params.push((name.to_string(), param.to_string(), number(k, v)?));
            } else if let Some((prefix, name)) = k.split_once('.').filter(|(p, _)| *p == "ensemble" || *p == "pickbest") {
                let kind = if prefix == "ensemble" { EnsembleKind::Hesca } else { EnsembleKind::PickBest };
                ensembles.retain(|e| e.name != name);
                ensembles.push(EnsembleDef { name: name.to_string(), kind, components: list(v, '+') });
            } else {
                ensure!(
                    matches!(
                        k,
                        "datasets" | "classifiers" | "resamples" | "train_proportion" | "alpha" | "folds" | "mode"
                            | "output" | "threads" | "class_col" | "rbf_grid" | "dnn_budget" | "overwrite"
                    ),
                    "unknown config key {k:?}"
                );
                scalar.insert(k, v);
            }
        }
        let get = |k: &str| scalar.get(k).copied();

        let grid = match get("rbf_grid").unwrap_or("desk") {
            "desk" => RbfGrid::Desk,
            "full" => RbfGrid::Full,
            other => bail!("rbf_grid: expected desk or full, got {other:?}"),
        };
        let dnn_budget: usize = get("dnn_budget").map_or(Ok(20), |v| number("dnn_budget", v))?;
        ensure!(dnn_budget >= 1, "dnn_budget must be >= 1");

        let mut names: Vec<String> = Vec::new();
        for entry in list(get("classifiers").unwrap_or("hesca"), ',') {
            if let Some((comps, ens)) = preset(&entry) {
                comps.iter().for_each(|c| push(&mut names, c));
                if let Some(e) = ens {
                    if !ensembles.iter().any(|x| x.name == e.name) {
                        ensembles.push(e);
                    }
                }
            } else if let Some((_, Some(e))) = ["hesca", "hesca-plus", "pick-best"]
                .iter()
                .map(|p| preset(p).expect("known preset"))
                .find(|(_, e)| e.as_ref().is_some_and(|e| e.name == entry))
            {
                e.components.iter().for_each(|c| push(&mut names, c));
                if !ensembles.iter().any(|x| x.name == e.name) {
                    ensembles.push(e);
                }
            } else if !ensembles.iter().any(|e| e.name == entry) {
                push(&mut names, &entry);
            }
        }
        for e in &ensembles {
            ensure!(!e.components.is_empty(), "ensemble {} has no components", e.name);
            e.components.iter().for_each(|c| push(&mut names, c));
        }

        let mut components = Vec::with_capacity(names.len());
        for name in &names {
            let def = match custom.iter().find(|(n, _)| n == name) {
                Some((_, base)) => builtin_component(base, grid, dnn_budget)
                    .or_else(|| ClassifierKind::parse(base).map(|k| ComponentDef::Spec(ClassifierSpec::defaults(k, 0))))
                    .ok_or_else(|| anyhow!("classifier.{name}: unknown classifier {base:?}"))?,
                None => builtin_component(name, grid, dnn_budget)
                    .or_else(|| ClassifierKind::parse(name).map(|k| ComponentDef::Spec(ClassifierSpec::defaults(k, 0))))
                    .ok_or_else(|| anyhow!("unknown classifier or preset {name:?}"))?,
            };
            components.push(Component { name: name.clone(), def });
        }
        for (name, param, value) in params {
            let c = components
                .iter_mut()
                .find(|c| c.name == name)
                .ok_or_else(|| anyhow!("param.{name}.{param}: no such classifier in the roster"))?;
            let point = ParamPoint(vec![(param.clone(), value)]);
            match &mut c.def {
                ComponentDef::Spec(s) => *s = apply_point(s, &point).with_context(|| format!("param.{name}.{param}"))?,
                ComponentDef::Tuned(t) => t.base = apply_point(&t.base, &point).with_context(|| format!("param.{name}.{param}"))?,
            }
        }
        for c in &mut components {
            if let ComponentDef::Spec(s) = &mut c.def {
                s.label = Some(c.name.clone());
            }
        }
        if let Some(clash) = ensembles.iter().find(|e| names.contains(&e.name)) {
            bail!("{} names both an ensemble and a component", clash.name);
        }

        let resamples: u64 = get("resamples").map_or(Ok(30), |v| number("resamples", v))?;
        ensure!(resamples >= 1, "resamples must be >= 1");
        let train_proportion: f64 = get("train_proportion").map_or(Ok(0.5), |v| number("train_proportion", v))?;
        ensure!(train_proportion > 0.0 && train_proportion < 1.0, "train_proportion must lie in (0, 1)");
        let alpha: f64 = get("alpha").map_or(Ok(4.0), |v| number("alpha", v))?;
        ensure!(alpha >= 0.0 && alpha.is_finite(), "alpha must be finite and >= 0");
        let folds: usize = get("folds").map_or(Ok(10), |v| number("folds", v))?;
        ensure!(folds >= 2, "folds must be >= 2");
        let mode = match get("mode").unwrap_or("probability") {
            "probability" => CombineMode::Probability,
            "prediction" => CombineMode::Prediction,
            other => bail!("mode: expected probability or prediction, got {other:?}"),
        };
        let output = match get("output") {
            Some(o) => PathBuf::from(o),
            None => std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from),
        };
        Ok(ExperimentConfig {
            datasets: list(get("datasets").unwrap_or(""), ',').into_iter().map(PathBuf::from).collect(),
            class_col: get("class_col").map(String::from),
            components,
            ensembles,
            resamples,
            train_proportion,
            alpha,
            folds,
            mode,
            output,
            threads: get("threads").map_or(Ok(0), |v| number("threads", v))?,
            overwrite: get("overwrite").map_or(Ok(false), |v| number("overwrite", v))?,
        })
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Names of every classifier with results: components, then ensembles.
    pub fn classifier_names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).chain(self.ensembles.iter().map(|e| e.name.clone())).collect()
    }
}
