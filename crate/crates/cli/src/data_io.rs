//! CSV and ARFF dataset loading.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hesca_core::Dataset;

/// Loads `path` as ARFF when its extension is `.arff`, CSV otherwise. The
/// dataset is named after the file stem.
pub fn load_dataset(path: &Path, class_col: Option<&str>) -> Result<Dataset> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("{}: no usable file name", path.display()))?;
    let is_arff = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("arff"));
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed = if is_arff { read_arff(file, name, class_col) } else { read_csv(file, name, class_col) };
    parsed.with_context(|| format!("loading {}", path.display()))
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "?" | "NA" | "NaN" | "nan")
}

fn parse_value(field: &str, line: usize, column: &str) -> Result<f64> {
    let field = field.trim();
    if is_missing(field) {
        bail!("line {line}: missing value in column {column}");
    }
    let v: f64 = field
        .parse()
        .map_err(|_| anyhow!("line {line}: column {column}: {field:?} is not a number"))?;
    if !v.is_finite() {
        bail!("line {line}: column {column}: non-finite value {field:?}");
    }
    Ok(v)
}

fn class_index(classes: &mut Vec<String>, label: &str) -> usize {
    match classes.iter().position(|c| c == label) {
        Some(j) => j,
        None => {
            classes.push(label.to_string());
            classes.len() - 1
        }
    }
}

/// Reads a CSV with a header row. The class column is `class_col` when given,
/// otherwise the column named `class`, otherwise the last column. Class
/// indices follow first appearance.
pub fn read_csv<R: Read>(reader: R, name: &str, class_col: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().context("reading header")?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        bail!("need at least one attribute column and a class column");
    }
    let target = match class_col {
        Some(col) => header.iter().position(|h| h == col).ok_or_else(|| anyhow!("no column named {col:?}"))?,
        None => header.iter().position(|h| h == "class").unwrap_or(header.len() - 1),
    };
    let attributes: Vec<String> =
        header.iter().enumerate().filter(|(i, _)| *i != target).map(|(_, h)| h.clone()).collect();

    let mut classes = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.context("malformed CSV record")?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            bail!("line {line}: {} fields, header has {}", record.len(), header.len());
        }
        for (i, field) in record.iter().enumerate() {
            if i == target {
                if is_missing(field) {
                    bail!("line {line}: missing class label");
                }
                labels.push(class_index(&mut classes, field));
            } else {
                values.push(parse_value(field, line, &header[i])?);
            }
        }
    }
    Ok(Dataset::from_flat(name, attributes, classes, values, labels)?)
}

/// Writes `d` as CSV: the attributes, then a `class` column of class names.
pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<&str> = d.attribute_names().iter().map(String::as_str).collect();
    header.push("class");
    w.write_record(&header)?;
    for (row, &y) in d.rows().zip(d.labels()) {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        fields.push(d.class_names()[y].clone());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

enum AttributeType {
    Numeric,
    Nominal(Vec<String>),
}

/// Splits an ARFF token list on commas outside quotes, unquoting each item.
fn split_arff(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), '\\') => cur.extend(chars.next()),
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') => quote = Some(ch),
            (None, ',') => out.push(std::mem::take(&mut cur).trim().to_string()),
            (None, c) => cur.push(c),
        }
    }
    out.push(cur.trim().to_string());
    out
}

/// Splits off the first whitespace-delimited (possibly quoted) token.
fn take_token(s: &str) -> Option<(String, &str)> {
    let s = s.trim_start();
    let first = s.chars().next()?;
    if first == '\'' || first == '"' {
        let end = s[1..].find(first)? + 1;
        Some((s[1..end].to_string(), &s[end + 1..]))
    } else {
        let end = s.find(char::is_whitespace).unwrap_or(s.len());
        Some((s[..end].to_string(), &s[end..]))
    }
}

/// Reads dense ARFF with numeric attributes and one nominal class attribute:
/// `class_col` when given, otherwise the last attribute. Class indices follow
/// the declaration order; declared classes that never occur are dropped.
pub fn read_arff<R: Read>(mut reader: R, name: &str, class_col: Option<&str>) -> Result<Dataset> {
    let mut text = String::new();
    reader.read_to_string(&mut text).context("reading ARFF")?;
    let mut attrs: Vec<(String, AttributeType)> = Vec::new();
    let mut in_data = false;
    let mut target = None;
    let mut declared = Vec::new();
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            } else if lower.starts_with("@attribute") {
                let (attr, rest) =
                    take_token(&line["@attribute".len()..]).ok_or_else(|| anyhow!("line {line_no}: attribute without a name"))?;
                let rest = rest.trim();
                let ty = if rest.starts_with('{') {
                    let close = rest.rfind('}').ok_or_else(|| anyhow!("line {line_no}: unterminated nominal list"))?;
                    AttributeType::Nominal(split_arff(&rest[1..close]).into_iter().filter(|v| !v.is_empty()).collect())
                } else {
                    match rest.to_ascii_lowercase().as_str() {
                        "numeric" | "real" | "integer" => AttributeType::Numeric,
                        other => bail!("line {line_no}: unsupported attribute type {other:?} for {attr}"),
                    }
                };
                attrs.push((attr, ty));
            } else if lower.starts_with("@data") {
                let t = match class_col {
                    Some(col) => attrs.iter().position(|(n, _)| n == col).ok_or_else(|| anyhow!("no attribute named {col:?}"))?,
                    None => attrs.len().checked_sub(1).ok_or_else(|| anyhow!("no attributes declared"))?,
                };
                declared = match &attrs[t].1 {
                    AttributeType::Nominal(v) => v.clone(),
                    AttributeType::Numeric => bail!("class attribute {} is not nominal", attrs[t].0),
                };
                if let Some((n, _)) = attrs.iter().enumerate().find(|(i, (_, ty))| *i != t && matches!(ty, AttributeType::Nominal(_))) {
                    bail!("attribute {} is nominal; only numeric attributes are supported", attrs[n].0);
                }
                target = Some(t);
                in_data = true;
            } else {
                bail!("line {line_no}: unexpected header line");
            }
            continue;
        }
        if line.starts_with('{') {
            bail!("line {line_no}: sparse ARFF is not supported");
        }
        let t = target.expect("set on @data");
        let fields = split_arff(line);
        if fields.len() != attrs.len() {
            bail!("line {line_no}: {} values, {} attributes declared", fields.len(), attrs.len());
        }
        for (i, field) in fields.iter().enumerate() {
            if i == t {
                let j = declared
                    .iter()
                    .position(|c| c == field)
                    .ok_or_else(|| anyhow!("line {line_no}: undeclared class {field:?}"))?;
                raw_labels.push(j);
            } else {
                values.push(parse_value(field, line_no, &attrs[i].0)?);
            }
        }
    }
    let t = target.ok_or_else(|| anyhow!("no @data section"))?;

    let mut seen = vec![false; declared.len()];
    raw_labels.iter().for_each(|&j| seen[j] = true);
    let remap: Vec<Option<usize>> = seen
        .iter()
        .scan(0, |next, &s| {
            Some(s.then(|| {
                *next += 1;
                *next - 1
            }))
        })
        .collect();
    let dropped: Vec<&str> = declared.iter().zip(&seen).filter(|(_, &s)| !s).map(|(c, _)| c.as_str()).collect();
    if !dropped.is_empty() {
        log::warn!("{name}: dropping declared classes with no instances: {}", dropped.join(","));
    }
    let classes = declared.iter().zip(&seen).filter(|(_, &s)| s).map(|(c, _)| c.clone()).collect();
    let labels = raw_labels.iter().map(|&j| remap[j].expect("observed")).collect();
    let attributes = attrs.into_iter().enumerate().filter(|(i, _)| *i != t).map(|(_, (n, _))| n).collect();
    Ok(Dataset::from_flat(name, attributes, classes, values, labels)?)
}
