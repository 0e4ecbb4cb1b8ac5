//! Results files: the predictions of one classifier on one split of one
//! resample.
//!
//! ```text
//! #meta,dataset=<name>,classifier=<name>,resample=<int>,split=<train|test>
//! #params,<free text>
//! #trainEstimate,<accuracy to 6 decimals>
//! <trueClass>,<predClass>,<p_0>,...,<p_{c-1}>
//! ```
//!
//! Text fields escape `\` as `\\`, `,` as `\,` and newline as `\n`.
//! Probabilities are written to 6 decimals after rounding each distribution
//! to millionths that sum to exactly one. Lines end with LF.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hesca_core::{PredictionRecord, PredictionSet, ProbVector, SplitTag};

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> ResultsError {
    ResultsError::Parse { line, message: message.into() }
}

/// `<root>/<classifier>/Predictions/<dataset>/<split>Fold<resample>.csv`
pub fn results_path(root: &Path, classifier: &str, dataset: &str, split: SplitTag, resample: u64) -> PathBuf {
    root.join(classifier)
        .join("Predictions")
        .join(dataset)
        .join(format!("{}Fold{resample}.csv", split.as_str()))
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            ',' => out.push_str("\\,"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Splits on unescaped commas and unescapes each field.
fn split_escaped(s: &str, line: usize) -> Result<Vec<String>, ResultsError> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => match chars.next() {
                Some('\\') => cur.push('\\'),
                Some(',') => cur.push(','),
                Some('n') => cur.push('\n'),
                other => return Err(parse_err(line, format!("bad escape sequence \\{}", other.map_or(String::new(), String::from)))),
            },
            ',' => fields.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    fields.push(cur);
    Ok(fields)
}

/// File contents for `set`, rounded to file precision.
pub fn format_results(set: &PredictionSet) -> String {
    let set = set.quantized();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "#meta,dataset={},classifier={},resample={},split={}",
        escape(&set.dataset_name),
        escape(&set.classifier_name),
        set.resample_id,
        set.split.as_str()
    );
    let _ = writeln!(out, "#params,{}", escape(&set.params));
    let _ = writeln!(out, "#trainEstimate,{:.6}", set.train_estimate);
    for r in &set.records {
        let _ = write!(out, "{},{}", r.true_class, r.predicted_class);
        for p in r.dist.as_slice() {
            let _ = write!(out, ",{p:.6}");
        }
        out.push('\n');
    }
    out
}

fn header<'a>(lines: &[&'a str], index: usize, tag: &str) -> Result<&'a str, ResultsError> {
    let line = lines.get(index).ok_or_else(|| parse_err(index + 1, format!("missing {tag} line")))?;
    line.strip_prefix(tag)
        .and_then(|rest| rest.strip_prefix(','))
        .ok_or_else(|| parse_err(index + 1, format!("expected a line starting with {tag},")))
}

/// Parses file contents, validating every record.
pub fn parse_results(text: &str) -> Result<PredictionSet, ResultsError> {
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }

    let meta = split_escaped(header(&lines, 0, "#meta")?, 1)?;
    let keys = ["dataset", "classifier", "resample", "split"];
    if meta.len() != keys.len() {
        return Err(parse_err(1, format!("expected {} meta fields, found {}", keys.len(), meta.len())));
    }
    let mut vals = Vec::with_capacity(keys.len());
    for (field, key) in meta.iter().zip(keys) {
        let v = field
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| parse_err(1, format!("expected {key}=..., found {field:?}")))?;
        vals.push(v.to_string());
    }
    let resample_id = vals[2].parse().map_err(|_| parse_err(1, format!("bad resample {:?}", vals[2])))?;
    let split = SplitTag::parse(&vals[3]).ok_or_else(|| parse_err(1, format!("bad split {:?}", vals[3])))?;

    let params = split_escaped(header(&lines, 1, "#params")?, 2)?.join(",");
    let est_text = header(&lines, 2, "#trainEstimate")?;
    let train_estimate: f64 = est_text
        .parse()
        .ok()
        .filter(|v: &f64| (0.0..=1.0).contains(v))
        .ok_or_else(|| parse_err(3, format!("bad train estimate {est_text:?}")))?;

    let mut records = Vec::with_capacity(lines.len().saturating_sub(3));
    let mut c = None;
    for (idx, line) in lines.iter().enumerate().skip(3) {
        let n = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(parse_err(n, "a record needs a true class, a prediction and at least two probabilities"));
        }
        let width = fields.len() - 2;
        if *c.get_or_insert(width) != width {
            return Err(parse_err(n, format!("{width} probabilities, earlier records have {}", c.unwrap())));
        }
        let index = |s: &str, what: &str| -> Result<usize, ResultsError> {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v < width)
                .ok_or_else(|| parse_err(n, format!("bad {what} {s:?}")))
        };
        let true_class = index(fields[0], "true class")?;
        let predicted = index(fields[1], "predicted class")?;
        let probs = fields[2..]
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v)).ok_or_else(|| parse_err(n, format!("bad probability {s:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > width as f64 * 5e-7 + 1e-9 {
            return Err(parse_err(n, format!("probabilities sum to {sum}")));
        }
        let dist = ProbVector::from_weights(probs).map_err(|e| parse_err(n, e.to_string()))?.quantized();
        let record = PredictionRecord::new(true_class, dist);
        if record.predicted_class != predicted {
            return Err(parse_err(
                n,
                format!("predicted class {predicted} is not the argmax {} of the probabilities", record.predicted_class),
            ));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(parse_err(lines.len().max(3) + 1, "no prediction records"));
    }
    Ok(PredictionSet {
        dataset_name: vals[0].clone(),
        classifier_name: vals[1].clone(),
        resample_id,
        split,
        params,
        train_estimate,
        records,
    })
}

/// Writes `set` to `path`, creating parent directories. The file is written
/// under a temporary name and renamed into place.
pub fn write_results(set: &PredictionSet, path: &Path) -> Result<(), ResultsError> {
    let io = |source| ResultsError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, format_results(set)).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_results(path: &Path) -> Result<PredictionSet, ResultsError> {
    let text = fs::read_to_string(path).map_err(|source| ResultsError::Io { path: path.to_path_buf(), source })?;
    parse_results(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set() -> PredictionSet {
        let pv = |v: &[f64]| ProbVector::new(v.to_vec()).unwrap();
        PredictionSet {
            dataset_name: "iris,v2".into(),
            classifier_name: "HESCA+".into(),
            resample_id: 7,
            split: SplitTag::Test,
            params: "alpha=4,note=a\\b\nc".into(),
            train_estimate: 0.8333333,
            records: vec![
                PredictionRecord::new(0, pv(&[0.7, 0.2, 0.1])),
                PredictionRecord::new(2, pv(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])),
            ],
        }
    }

    #[test]
    fn exact_layout() {
        let text = format_results(&set());
        let expected = "#meta,dataset=iris\\,v2,classifier=HESCA+,resample=7,split=test\n\
                        #params,alpha=4\\,note=a\\\\b\\nc\n\
                        #trainEstimate,0.833333\n\
                        0,0,0.700000,0.200000,0.100000\n\
                        2,0,0.333334,0.333333,0.333333\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn round_trip_at_file_precision() {
        let back = parse_results(&format_results(&set())).unwrap();
        assert_eq!(back, set().quantized());
        assert_eq!(format_results(&back), format_results(&set()));
    }

    #[test]
    fn line_numbered_errors() {
        let good = format_results(&set());
        let bad = good.replace("0.700000,0.200000,0.100000", "0.500000,0.200000,0.100000");
        match parse_results(&bad) {
            Err(ResultsError::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("sum"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let header_only: String = good.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_results(&header_only), Err(ResultsError::Parse { .. })));
        let wrong_pred = good.replace("0,0,0.700000", "0,1,0.700000");
        assert!(matches!(parse_results(&wrong_pred), Err(ResultsError::Parse { line: 4, .. })));
    }
}
