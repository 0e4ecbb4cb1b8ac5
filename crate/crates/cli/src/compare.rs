//! Comparison of stored results across classifiers and datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use hesca_core::stats::{
    cd_diagram, friedman_test, pairwise_wilcoxon, texas_sharpshooter, CdDiagramData, FriedmanResult, ResultsMatrix,
    Sharpshooter,
};
use serde::Serialize;

use crate::experiment::{CellMetrics, Metric, ResultStore};

pub const TRAIN_SIZE_BANDS: [&str; 5] = ["1-100", "101-500", "501-1000", "1001-5000", ">5001"];
pub const CLASS_BANDS: [&str; 4] = ["2", "3-5", "6-10", "11+"];

/// Train-size band; the last band takes every size above 5000.
pub fn train_size_band(n: usize) -> &'static str {
    match n {
        0..=100 => TRAIN_SIZE_BANDS[0],
        101..=500 => TRAIN_SIZE_BANDS[1],
        501..=1000 => TRAIN_SIZE_BANDS[2],
        1001..=5000 => TRAIN_SIZE_BANDS[3],
        _ => TRAIN_SIZE_BANDS[4],
    }
}

pub fn class_band(c: usize) -> &'static str {
    match c {
        0..=2 => CLASS_BANDS[0],
        3..=5 => CLASS_BANDS[1],
        6..=10 => CLASS_BANDS[2],
        _ => CLASS_BANDS[3],
    }
}

/// Per-resample statistics of every classifier found under some roots.
#[derive(Debug, Clone, Default)]
pub struct ResultsTable {
    pub classifiers: Vec<String>,
    pub datasets: Vec<String>,
    /// `(classifier, dataset) -> cells in resample order`
    pub cells: BTreeMap<(String, String), Vec<CellMetrics>>,
    /// `(classifier, dataset) -> chosen parameter descriptions of tuned runs`
    pub chosen: BTreeMap<(String, String), Vec<String>>,
}

impl ResultsTable {
    /// Loads every classifier under `roots`. A name found under several roots
    /// is labelled `<root dir name>:<name>`. Classifiers whose results do not
    /// cover the same (dataset, resample) cells, or whose cells disagree on
    /// the true classes, are reported together as an error.
    pub fn load(roots: &[PathBuf], only: Option<&[String]>) -> Result<Self> {
        let mut found: Vec<(PathBuf, String)> = Vec::new();
        let mut scans = Vec::new();
        for root in roots {
            let scan = ResultStore::new(root).scan()?;
            found.extend(scan.keys().map(|c| (root.clone(), c.clone())));
            scans.push(scan);
        }
        let label = |root: &Path, name: &str| {
            if found.iter().filter(|(_, n)| n == name).count() > 1 {
                let dir = root.file_name().and_then(|s| s.to_str()).unwrap_or("results");
                format!("{dir}:{name}")
            } else {
                name.to_string()
            }
        };

        let mut table = ResultsTable::default();
        let mut keys: BTreeMap<String, BTreeSet<(String, u64)>> = BTreeMap::new();
        let mut truth: BTreeMap<(String, u64), (String, Vec<usize>)> = BTreeMap::new();
        let mut offenders = Vec::new();
        for (root, scan) in roots.iter().zip(&scans) {
            let store = ResultStore::new(root);
            for (name, datasets) in scan {
                let shown = label(root, name);
                if only.is_some_and(|o| !o.iter().any(|x| *x == shown || x == name)) {
                    continue;
                }
                table.classifiers.push(shown.clone());
                for (dataset, resamples) in datasets {
                    for &r in resamples {
                        let res = store.read(name, dataset, r)?;
                        let classes: Vec<usize> = res.test.records.iter().map(|x| x.true_class).collect();
                        match truth.get(&(dataset.clone(), r)) {
                            Some((first, t)) if *t != classes => {
                                offenders.push(format!("{shown} and {first} disagree on the test instances of {dataset} resample {r}"))
                            }
                            Some(_) => {}
                            None => {
                                truth.insert((dataset.clone(), r), (shown.clone(), classes));
                            }
                        }
                        let mut cell = CellMetrics::compute(&res)?;
                        cell.classifier = shown.clone();
                        table.cells.entry((shown.clone(), dataset.clone())).or_default().push(cell);
                        if let Some((_, chosen)) = res.test.params.rsplit_once(";chosen=") {
                            table.chosen.entry((shown.clone(), dataset.clone())).or_default().push(chosen.to_string());
                        }
                        keys.entry(shown.clone()).or_default().insert((dataset.clone(), r));
                    }
                }
            }
        }
        if let Some(o) = only {
            for want in o {
                if !table.classifiers.contains(want) {
                    bail!("no results for classifier {want}");
                }
            }
            table.classifiers.sort_by_key(|c| o.iter().position(|x| x == c).unwrap_or(usize::MAX));
        }
        let all: BTreeSet<(String, u64)> = keys.values().flatten().cloned().collect();
        for (c, have) in &keys {
            let lacking: Vec<String> = all.difference(have).map(|(d, r)| format!("{d}#{r}")).collect();
            if !lacking.is_empty() {
                offenders.push(format!("{c} lacks {}", lacking.join(", ")));
            }
        }
        if !offenders.is_empty() {
            bail!("misaligned results:\n  {}", offenders.join("\n  "));
        }
        if table.classifiers.is_empty() {
            bail!("no results found");
        }
        table.datasets = all.iter().map(|(d, _)| d.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        Ok(table)
    }

    pub fn cells(&self, classifier: &str, dataset: &str) -> &[CellMetrics] {
        self.cells.get(&(classifier.to_string(), dataset.to_string())).map_or(&[], Vec::as_slice)
    }

    /// Mean of `f` over the resamples of one (classifier, dataset).
    pub fn mean(&self, classifier: &str, dataset: &str, f: impl Fn(&CellMetrics) -> f64) -> f64 {
        let cells = self.cells(classifier, dataset);
        cells.iter().map(f).sum::<f64>() / cells.len() as f64
    }

    pub fn matrix(&self, metric: Metric) -> Result<ResultsMatrix> {
        let rows: Vec<Vec<f64>> = self
            .datasets
            .iter()
            .map(|d| self.classifiers.iter().map(|c| self.mean(c, d, |x| x.metric(metric))).collect())
            .collect();
        let mut m = ResultsMatrix::from_rows(&rows, metric.higher_is_better())?;
        m.dataset_names = self.datasets.clone();
        m.classifier_names = self.classifiers.clone();
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub band: String,
    pub problems: usize,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    /// Mean of `a - b` over the band's datasets.
    pub mean_difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub dataset: String,
    pub a: f64,
    pub b: f64,
}

/// `a` against `b`; a win is a dataset where `a`'s mean is better.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub a: String,
    pub b: String,
    pub wilcoxon_p: f64,
    pub wins: usize,
    pub draws: usize,
    pub losses: usize,
    /// Mean of `a - b` over datasets.
    pub mean_difference: f64,
    pub scatter: Vec<ScatterPoint>,
    /// Ratios of `a`'s to `b`'s train-estimated and test accuracy per dataset.
    pub sharpshooter: Option<Sharpshooter>,
    pub by_train_size: Vec<BandRow>,
    pub by_classes: Vec<BandRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasHistogram {
    pub classifier: String,
    pub mean_bias: f64,
    /// Lower edges of equal-width bins; values outside land in the end bins.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterFrequency {
    pub classifier: String,
    /// Chosen parameter description and how many resamples chose it.
    pub counts: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub metric: Metric,
    pub alpha: f64,
    pub classifiers: Vec<String>,
    pub datasets: Vec<String>,
    /// Dataset by classifier means.
    pub matrix: Vec<Vec<f64>>,
    pub friedman: Option<FriedmanResult>,
    /// Whether the Iman-Davenport test rejects equal ranks at `alpha`.
    pub omnibus_rejected: bool,
    pub cd: CdDiagramData,
    pub pairs: Vec<PairReport>,
    pub bias: Vec<BiasHistogram>,
    pub parameter_selection: Vec<ParameterFrequency>,
}

const BIAS_BINS: usize = 30;
const BIAS_LOW: f64 = -0.3;
const BIAS_WIDTH: f64 = 0.02;

fn band_rows<'a>(bands: &[&'a str], of: impl Fn(usize) -> &'a str, datasets: &[(usize, f64, f64)], hib: bool) -> Vec<BandRow> {
    bands
        .iter()
        .map(|&band| {
            let inside: Vec<&(usize, f64, f64)> = datasets.iter().filter(|(k, _, _)| of(*k) == band).collect();
            let (wins, draws, losses) = tally(inside.iter().map(|(_, a, b)| (*a, *b)), hib);
            BandRow {
                band: band.into(),
                problems: inside.len(),
                wins,
                draws,
                losses,
                mean_difference: (!inside.is_empty())
                    .then(|| inside.iter().map(|(_, a, b)| a - b).sum::<f64>() / inside.len() as f64),
            }
        })
        .collect()
}

/// Wins, draws and losses of `a` over `(a, b)` pairs.
pub fn tally(pairs: impl Iterator<Item = (f64, f64)>, higher_is_better: bool) -> (usize, usize, usize) {
    let (mut w, mut d, mut l) = (0, 0, 0);
    for (a, b) in pairs {
        if a == b {
            d += 1;
        } else if (a > b) == higher_is_better {
            w += 1;
        } else {
            l += 1;
        }
    }
    (w, d, l)
}

#[allow(clippy::needless_range_loop)]
pub fn compare(table: &ResultsTable, metric: Metric, alpha: f64) -> Result<CompareReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must lie in (0, 1)");
    }
    let m = table.matrix(metric)?;
    let hib = metric.higher_is_better();
    let friedman = friedman_test(&m).ok();
    let omnibus_rejected = friedman.as_ref().is_some_and(|f| f.iman_davenport_p < alpha);
    let cd = cd_diagram(&m, alpha)?;
    let p = pairwise_wilcoxon(&m);
    let k = table.classifiers.len();

    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (&table.classifiers[i], &table.classifiers[j]);
            let (ca, cb) = (m.column(i), m.column(j));
            let (wins, draws, losses) = tally(ca.iter().copied().zip(cb.iter().copied()), hib);
            let shape: Vec<(usize, usize, f64, f64)> = table
                .datasets
                .iter()
                .zip(ca.iter().zip(&cb))
                .map(|(d, (&x, &y))| {
                    let first = &table.cells(a, d)[0];
                    (first.train_size, first.classes, x, y)
                })
                .collect();
            let acc = |c: &str, f: fn(&CellMetrics) -> f64| -> Vec<f64> { table.datasets.iter().map(|d| table.mean(c, d, f)).collect() };
            let sharpshooter = texas_sharpshooter(
                &acc(a, |x| x.train_estimate),
                &acc(b, |x| x.train_estimate),
                &acc(a, |x| 1.0 - x.error),
                &acc(b, |x| 1.0 - x.error),
            )
            .ok();
            pairs.push(PairReport {
                a: a.clone(),
                b: b.clone(),
                wilcoxon_p: p[i][j],
                wins,
                draws,
                losses,
                mean_difference: ca.iter().zip(&cb).map(|(x, y)| x - y).sum::<f64>() / ca.len() as f64,
                scatter: table.datasets.iter().zip(ca.iter().zip(&cb)).map(|(d, (&x, &y))| ScatterPoint { dataset: d.clone(), a: x, b: y }).collect(),
                sharpshooter,
                by_train_size: band_rows(&TRAIN_SIZE_BANDS, train_size_band, &shape.iter().map(|s| (s.0, s.2, s.3)).collect::<Vec<_>>(), hib),
                by_classes: band_rows(&CLASS_BANDS, class_band, &shape.iter().map(|s| (s.1, s.2, s.3)).collect::<Vec<_>>(), hib),
            });
        }
    }

    let bias = table
        .classifiers
        .iter()
        .map(|c| {
            let values: Vec<f64> = table.datasets.iter().flat_map(|d| table.cells(c, d).iter().map(|x| x.bias)).collect();
            let mut counts = vec![0usize; BIAS_BINS];
            for v in &values {
                let bin = ((v - BIAS_LOW) / BIAS_WIDTH).floor().clamp(0.0, (BIAS_BINS - 1) as f64) as usize;
                counts[bin] += 1;
            }
            BiasHistogram {
                classifier: c.clone(),
                mean_bias: values.iter().sum::<f64>() / values.len() as f64,
                bin_edges: (0..BIAS_BINS).map(|b| BIAS_LOW + b as f64 * BIAS_WIDTH).collect(),
                counts,
            }
        })
        .collect();

    let parameter_selection = table
        .classifiers
        .iter()
        .filter_map(|c| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for d in &table.datasets {
                for chosen in table.chosen.get(&(c.clone(), d.clone())).into_iter().flatten() {
                    *counts.entry(chosen).or_default() += 1;
                }
            }
            let mut counts: Vec<(String, usize)> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            counts.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
            (!counts.is_empty()).then(|| ParameterFrequency { classifier: c.clone(), counts })
        })
        .collect();

    Ok(CompareReport {
        metric,
        alpha,
        classifiers: table.classifiers.clone(),
        datasets: table.datasets.clone(),
        matrix: (0..m.datasets()).map(|i| m.row(i).to_vec()).collect(),
        friedman,
        omnibus_rejected,
        cd,
        pairs,
        bias,
        parameter_selection,
    })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Critical difference diagram: average ranks on an axis, best rank on the
/// left, with a bar under each clique.
pub fn cd_svg(cd: &CdDiagramData) -> String {
    let k = cd.average_ranks.len();
    let (width, left, right, axis_y) = (640.0, 160.0, 480.0, 60.0);
    let span = (k.max(2) - 1) as f64;
    let x = |rank: f64| left + (rank - 1.0) / span * (right - left);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| cd.average_ranks[a].total_cmp(&cd.average_ranks[b]));
    let half = k.div_ceil(2);
    let label_rows = half.max(k - half);
    let clique_top = axis_y + 14.0;
    let labels_top = clique_top + 10.0 * cd.cliques.len() as f64 + 20.0;
    let height = labels_top + 20.0 * label_rows as f64 + 20.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{axis_y}\" x2=\"{right}\" y2=\"{axis_y}\" stroke=\"black\"/>");
    for r in 1..=k.max(2) {
        let xr = x(r as f64);
        let _ = writeln!(s, "<line x1=\"{xr:.1}\" y1=\"{}\" x2=\"{xr:.1}\" y2=\"{axis_y}\" stroke=\"black\"/>", axis_y - 6.0);
        let _ = writeln!(s, "<text x=\"{xr:.1}\" y=\"{}\" text-anchor=\"middle\">{r}</text>", axis_y - 10.0);
    }
    for (i, clique) in cd.cliques.iter().enumerate() {
        let lo = clique.iter().map(|&c| cd.average_ranks[c]).fold(f64::INFINITY, f64::min);
        let hi = clique.iter().map(|&c| cd.average_ranks[c]).fold(f64::NEG_INFINITY, f64::max);
        let y = clique_top + 10.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{y}\" x2=\"{:.1}\" y2=\"{y}\" stroke=\"black\" stroke-width=\"4\"/>",
            x(lo) - 3.0,
            x(hi) + 3.0
        );
    }
    for (pos, &c) in order.iter().enumerate() {
        let on_left = pos < half;
        let row = if on_left { pos } else { k - 1 - pos };
        let y = labels_top + 20.0 * row as f64;
        let xr = x(cd.average_ranks[c]);
        let (end, anchor, tx) = if on_left { (left - 20.0, "end", left - 24.0) } else { (right + 20.0, "start", right + 24.0) };
        let _ = writeln!(s, "<polyline points=\"{xr:.1},{axis_y} {xr:.1},{y} {end},{y}\" fill=\"none\" stroke=\"black\"/>");
        let _ = writeln!(
            s,
            "<text x=\"{tx}\" y=\"{}\" text-anchor=\"{anchor}\">{} ({:.2})</text>",
            y + 4.0,
            xml_escape(&cd.classifier_names[c]),
            cd.average_ranks[c]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `compare-<metric>.json` and `cd-<metric>.svg` into `dir`.
pub fn write_report(report: &CompareReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let json = dir.join(format!("compare-{}.json", report.metric.as_str()));
    let svg = dir.join(format!("cd-{}.svg", report.metric.as_str()));
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n")?;
    std::fs::write(&svg, cd_svg(&report.cd))?;
    Ok((json, svg))
}

/// Short plain-text digest of a report.
pub fn render_text(report: &CompareReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "metric {} over {} datasets", report.metric.as_str(), report.datasets.len());
    if let Some(f) = &report.friedman {
        let _ = writeln!(
            s,
            "friedman chi2 = {:.4} (p = {:.4}), iman-davenport F = {:.4} (p = {:.4})",
            f.chi_square, f.chi_square_p, f.iman_davenport, f.iman_davenport_p
        );
    }
    let mut order: Vec<usize> = (0..report.classifiers.len()).collect();
    order.sort_by(|&a, &b| report.cd.average_ranks[a].total_cmp(&report.cd.average_ranks[b]));
    for i in order {
        let _ = writeln!(s, "  {:<16} {:.3}", report.classifiers[i], report.cd.average_ranks[i]);
    }
    for c in &report.cd.cliques {
        let names: Vec<&str> = c.iter().map(|&i| report.classifiers[i].as_str()).collect();
        let _ = writeln!(s, "clique: {}", names.join(", "));
    }
    for p in &report.pairs {
        let _ = writeln!(s, "{} vs {}: {}/{}/{} (win/draw/loss), p = {:.4}", p.a, p.b, p.wins, p.draws, p.losses, p.wilcoxon_p);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        assert_eq!(train_size_band(100), "1-100");
        assert_eq!(train_size_band(101), "101-500");
        assert_eq!(train_size_band(5000), "1001-5000");
        assert_eq!(train_size_band(5001), ">5001");
        assert_eq!(class_band(2), "2");
        assert_eq!(class_band(5), "3-5");
        assert_eq!(class_band(10), "6-10");
        assert_eq!(class_band(11), "11+");
    }

    #[test]
    fn tally_respects_direction() {
        let pairs = [(0.1, 0.2), (0.3, 0.3), (0.5, 0.4)];
        assert_eq!(tally(pairs.iter().copied(), false), (1, 1, 1));
        assert_eq!(tally([(0.9, 0.8)].into_iter(), true), (1, 0, 0));
    }

    #[test]
    fn svg_is_well_formed() {
        let cd = CdDiagramData {
            classifier_names: vec!["A".into(), "B<".into(), "C".into()],
            average_ranks: vec![1.2, 2.0, 2.8],
            cliques: vec![vec![0, 1], vec![1, 2]],
            alpha: 0.05,
        };
        let svg = cd_svg(&cd);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("B&lt; (2.00)"));
        assert_eq!(svg.matches("stroke-width=\"4\"").count(), 2);
    }
}
