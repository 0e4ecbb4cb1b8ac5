use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hesca::compare::{compare, render_text, write_report, ResultsTable};
use hesca::config::{parse_pairs, EnsembleDef, EnsembleKind, ExperimentConfig, HESCA_COMPONENTS, OUTPUT_ENV};
use hesca::data_io::write_csv;
use hesca::experiment::{compose_directory, run_experiment, sweep_alpha, Metric, ResultStore};
use hesca::synth::{benchmark_suite, generate, SynthSpec};
use hesca_core::CombineMode;

#[derive(Parser)]
#[command(name = "hesca", version, about = "Ensembles of mixed classifiers weighted by cross-validation accuracy: experiments and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (dataset, classifier, resample) and write results files.
    Run(RunArgs),
    /// Compare stored results: ranks, tests, cliques and breakdowns.
    Compare(CompareArgs),
    /// Compose an ensemble from stored component results.
    Ensemble(EnsembleArgs),
    /// Mean accuracy of the weighted ensemble for a list of exponents.
    SweepAlpha(SweepArgs),
    /// Write Gaussian-mixture datasets as CSV.
    GenSynth(SynthArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated dataset files (CSV or ARFF).
    #[arg(long)]
    datasets: Option<String>,
    /// Comma-separated classifiers and presets.
    #[arg(long)]
    classifiers: Option<String>,
    #[arg(long)]
    resamples: Option<u64>,
    #[arg(long)]
    train_proportion: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// probability or prediction
    #[arg(long)]
    mode: Option<String>,
    /// Output directory [default: $HESCA_OUTPUT_DIR, else ./results]
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    class_col: Option<String>,
    /// Recompute cells whose results files already exist.
    #[arg(long)]
    overwrite: bool,
    /// Any config entry, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut pairs = match &self.config {
            Some(p) => parse_pairs(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => Vec::new(),
        };
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        put("datasets", self.datasets.clone());
        put("classifiers", self.classifiers.clone());
        put("resamples", self.resamples.map(|v| v.to_string()));
        put("train_proportion", self.train_proportion.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("folds", self.folds.map(|v| v.to_string()));
        put("mode", self.mode.clone());
        put("output", self.output.as_ref().map(|p| p.display().to_string()));
        put("threads", self.threads.map(|v| v.to_string()));
        put("class_col", self.class_col.clone());
        put("overwrite", self.overwrite.then(|| "true".to_string()));
        for s in &self.set {
            let (k, v) = s.split_once('=').with_context(|| format!("--set {s}: expected key=value"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        ExperimentConfig::from_pairs(&pairs)
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Results directories.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// error, balanced-error, nll, auroc or all
    #[arg(long, default_value = "error")]
    metric: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated subset of classifiers, in report order.
    #[arg(long)]
    classifiers: Option<String>,
    /// Report directory [default: <first dir>/comparison]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Results directory holding the components [default: $HESCA_OUTPUT_DIR, else ./results]
    #[arg(long)]
    results: Option<PathBuf>,
    /// Comma-separated component names, or "all".
    #[arg(long)]
    components: String,
    #[arg(long)]
    name: String,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value = "probability")]
    mode: String,
    /// Select the component with the best train estimate instead of combining.
    #[arg(long)]
    pick_best: bool,
    /// Where to write the ensemble's files [default: the results directory]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Exponents, comma-separated.
    #[arg(long, default_value = "0,1,2,3,4,5,6,7,8,9,10")]
    alphas: String,
    /// Comma-separated components [default: the five basic components]
    #[arg(long)]
    components: Option<String>,
    /// Results directory to read when no experiment is configured.
    #[arg(long)]
    results: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Write the fifteen-dataset benchmark suite.
    #[arg(long)]
    suite: bool,
    #[arg(long, default_value = "synth")]
    name: String,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 300)]
    instances: usize,
    #[arg(long, default_value_t = 4)]
    attributes: usize,
    #[arg(long, default_value_t = 2)]
    clusters: usize,
    /// Standard deviation of each cluster.
    #[arg(long, default_value_t = 0.6)]
    overlap: f64,
    #[arg(long, default_value_t = 0)]
    noise: usize,
    #[arg(long, default_value_t = 2.0)]
    imbalance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn default_results_dir() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

fn parse_mode(s: &str) -> Result<CombineMode> {
    match s {
        "probability" => Ok(CombineMode::Probability),
        "prediction" => Ok(CombineMode::Prediction),
        other => bail!("mode: expected probability or prediction, got {other:?}"),
    }
}

fn names(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let summary = run_experiment(&cfg)?;
            println!(
                "{} cells written, {} missing; summary in {}",
                summary.cells.len(),
                summary.missing.len(),
                cfg.output.join("summary.json").display()
            );
            for m in &summary.missing {
                println!("missing {}/{}/{}: {}", m.dataset, m.classifier, m.resample, m.reason);
            }
            if let Some(t) = summary.ranks.first() {
                println!("average {} ranks over {} datasets:", t.metric.as_str(), t.datasets.len());
                for (c, r) in t.classifiers.iter().zip(&t.average_ranks) {
                    println!("  {c:<16} {r:.3}");
                }
            }
        }
        Command::Compare(args) => {
            let only = args.classifiers.as_deref().map(names);
            let table = ResultsTable::load(&args.dirs, only.as_deref())?;
            let metrics = match args.metric.as_str() {
                "all" => Metric::ALL.to_vec(),
                m => vec![Metric::parse(m).with_context(|| format!("unknown metric {m:?}"))?],
            };
            let out = args.out.unwrap_or_else(|| args.dirs[0].join("comparison"));
            for metric in metrics {
                let report = compare(&table, metric, args.alpha)?;
                let (json, svg) = write_report(&report, &out)?;
                print!("{}", render_text(&report));
                println!("wrote {} and {}", json.display(), svg.display());
            }
        }
        Command::Ensemble(args) => {
            let results = args.results.unwrap_or_else(default_results_dir);
            let store = ResultStore::new(&results);
            let components = if args.components == "all" {
                store.scan()?.into_keys().filter(|c| *c != args.name).collect()
            } else {
                names(&args.components)
            };
            let def = EnsembleDef {
                name: args.name,
                kind: if args.pick_best { EnsembleKind::PickBest } else { EnsembleKind::Hesca },
                components,
            };
            let out = ResultStore::new(args.out.unwrap_or(results));
            let (written, skipped) = compose_directory(&store, &out, &def, args.alpha, parse_mode(&args.mode)?)?;
            println!("{}: {written} cells composed from {}", def.name, def.components.join("+"));
            for m in skipped {
                println!("skipped {}/{}: {}", m.dataset, m.resample, m.reason);
            }
        }
        Command::SweepAlpha(args) => {
            let alphas = names(&args.alphas)
                .iter()
                .map(|a| a.parse::<f64>().with_context(|| format!("bad alpha {a:?}")))
                .collect::<Result<Vec<_>>>()?;
            let components = args.components.as_deref().map_or_else(|| HESCA_COMPONENTS.map(String::from).to_vec(), names);
            let (results, mode) = if args.run.config.is_some() || args.run.datasets.is_some() {
                let mut run = args.run.clone();
                run.classifiers = Some(components.join(","));
                let mut cfg = run.config()?;
                cfg.ensembles.clear();
                run_experiment(&cfg)?;
                (cfg.output.clone(), cfg.mode)
            } else {
                let mode = args.run.mode.as_deref().map_or(Ok(CombineMode::Probability), parse_mode)?;
                (args.results.unwrap_or_else(default_results_dir), mode)
            };
            let rows = sweep_alpha(&ResultStore::new(&results), &components, &alphas, mode)?;
            println!("alpha,meanAccuracy");
            for r in &rows {
                println!("{},{:.6}", r.alpha, r.mean_accuracy);
            }
            fs::write(results.join("sweep-alpha.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
        }
        Command::GenSynth(args) => {
            let specs = if args.suite {
                benchmark_suite()
            } else {
                vec![SynthSpec {
                    name: args.name,
                    classes: args.classes,
                    instances: args.instances,
                    attributes: args.attributes,
                    clusters_per_class: args.clusters,
                    overlap: args.overlap,
                    noise_attributes: args.noise,
                    imbalance: args.imbalance,
                    seed: args.seed,
                }]
            };
            fs::create_dir_all(&args.out)?;
            for spec in specs {
                let d = generate(&spec)?;
                let path = args.out.join(format!("{}.csv", spec.name));
                write_csv(&d, fs::File::create(&path)?)?;
                println!("{} ({} x {}, {} classes)", path.display(), d.n(), d.m(), d.c());
            }
        }
    }
    Ok(())
}
