//! Datasets, stratified resampling and cross-validation folds.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Real-valued attribute matrix with integer class labels.
///
/// Instances are stored row-major. A `Dataset` always satisfies: `n >= 1`,
/// `m >= 1`, `c >= 2`, every label is below `c`, every class occurs at least
/// once and every attribute value is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    attribute_names: Vec<String>,
    class_names: Vec<String>,
    values: Vec<f64>,
    labels: Vec<usize>,
    m: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        attribute_names: Vec<String>,
        class_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let m = attribute_names.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} values, expected {m}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(name, attribute_names, class_names, values, labels)
    }

    /// Builds a dataset from a row-major value buffer of length `n * m`.
    pub fn from_flat(
        name: impl Into<String>,
        attribute_names: Vec<String>,
        class_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let d = Dataset {
            name: name.into(),
            m: attribute_names.len(),
            attribute_names,
            class_names,
            values,
            labels,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let (n, m, c) = (self.labels.len(), self.m, self.class_names.len());
        if n == 0 {
            return Err(Error::InvalidDataset("no instances".into()));
        }
        if m == 0 {
            return Err(Error::InvalidDataset("no attributes".into()));
        }
        if c < 2 {
            return Err(Error::InvalidDataset(format!(
                "{c} class(es) declared, at least 2 required"
            )));
        }
        if self.values.len() != n * m {
            return Err(Error::InvalidDataset(format!(
                "value buffer holds {} entries, expected {}",
                self.values.len(),
                n * m
            )));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at instance {}, attribute {}",
                pos / m,
                pos % m
            )));
        }
        let mut counts = vec![0usize; c];
        for (i, &y) in self.labels.iter().enumerate() {
            if y >= c {
                return Err(Error::InvalidDataset(format!(
                    "instance {i} has label {y}, but only {c} classes exist"
                )));
            }
            counts[y] += 1;
        }
        let missing: Vec<&str> = counts
            .iter()
            .zip(&self.class_names)
            .filter(|(&k, _)| k == 0)
            .map(|(_, name)| name.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidDataset(format!(
                "classes never observed: {}",
                missing.join(",")
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Instance count.
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Attribute count.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Class count.
    pub fn c(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.c()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Indices of the instances of each class, in instance order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.c()];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// The instances at `indices`, in that order (duplicates allowed).
    ///
    /// Fails if the selection leaves some class without instances.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut values = Vec::with_capacity(indices.len() * self.m);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::from_flat(
            self.name.clone(),
            self.attribute_names.clone(),
            self.class_names.clone(),
            values,
            labels,
        )
    }

    /// Same instances with every attribute vector replaced by `f(row)`.
    ///
    /// `f` must return vectors of length `new_names.len()`.
    pub fn map_rows(
        &self,
        new_names: Vec<String>,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<Dataset> {
        let mut values = Vec::with_capacity(self.n() * new_names.len());
        for row in self.rows() {
            let mapped = f(row);
            if mapped.len() != new_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: new_names.len(),
                    found: mapped.len(),
                });
            }
            values.extend(mapped);
        }
        Dataset::from_flat(
            self.name.clone(),
            new_names,
            self.class_names.clone(),
            values,
            self.labels.clone(),
        )
    }
}

/// Proportion of each class among the instances; sums to one.
pub fn class_distribution(d: &Dataset) -> Vec<f64> {
    let n = d.n() as f64;
    d.class_counts().into_iter().map(|k| k as f64 / n).collect()
}

/// Apportions `target` units over `quotas` by the largest-remainder rule.
///
/// Every entry receives the floor of its quota; the units still missing go to
/// the largest fractional remainders, ties toward the lower index.
pub fn largest_remainder(quotas: &[f64], target: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    // stable sort keeps lower indices first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - libm::floor(quotas[a]);
        let rb = quotas[b] - libm::floor(quotas[b]);
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal)
    });
    for &j in order.iter().take(target.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}

/// One seeded stratified train/test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub resample_id: u64,
    pub train_proportion: f64,
    /// Source instance index of every train instance, in train order.
    pub train_indices: Vec<usize>,
    /// Source instance index of every test instance, in test order.
    pub test_indices: Vec<usize>,
}

/// Per-class train counts for a stratified split of `counts` at `proportion`.
///
/// The global target is `round(n * proportion)` (halves up); classes share it
/// by the largest-remainder rule.
pub fn stratified_train_counts(counts: &[usize], proportion: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let target = libm::floor(n as f64 * proportion + 0.5) as usize;
    let quotas: Vec<f64> = counts.iter().map(|&k| k as f64 * proportion).collect();
    largest_remainder(&quotas, target)
}

/// Deterministic stratified resample of `d` into train and test.
///
/// Each class's instances are shuffled by a ChaCha8 stream seeded from
/// `(d.name(), resample_id)`; the first `stratified_train_counts` of them go to
/// train. Both sides are then shuffled once more by the same stream.
pub fn stratified_resample(d: &Dataset, resample_id: u64, train_proportion: f64) -> Result<Split> {
    if !(train_proportion > 0.0 && train_proportion < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train proportion {train_proportion} outside (0, 1)"
        )));
    }
    let counts = d.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::TooFewInstances { class, count, needed: 2 });
        }
    }
    let train_counts = stratified_train_counts(&counts, train_proportion);
    for (class, (&k, &total)) in train_counts.iter().zip(&counts).enumerate() {
        if k == 0 || k == total {
            return Err(Error::TooFewInstances { class, count: total, needed: 2 });
        }
    }

    let mut rng = rng_from_seed(derive_seed(d.name(), resample_id));
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (mut members, &k) in d.class_indices().into_iter().zip(&train_counts) {
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..k]);
        test_idx.extend_from_slice(&members[k..]);
    }
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);

    Ok(Split {
        train: d.subset(&train_idx)?,
        test: d.subset(&test_idx)?,
        resample_id,
        train_proportion,
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

/// Folds actually used when `requested` folds are asked for on `d`.
///
/// The count is lowered to the smallest class count; fewer than two usable
/// folds is an error.
pub fn effective_folds(d: &Dataset, requested: usize) -> Result<usize> {
    if requested < 2 {
        return Err(Error::InvalidArgument(format!(
            "at least 2 folds required, got {requested}"
        )));
    }
    let counts = d.class_counts();
    let (class, &smallest) = counts
        .iter()
        .enumerate()
        .min_by_key(|(_, &k)| k)
        .expect("dataset has classes");
    if smallest < 2 {
        return Err(Error::TooFewInstances { class, count: smallest, needed: 2 });
    }
    Ok(requested.min(smallest))
}

/// Stratified cross-validation folds: the held-out instance indices of each fold.
///
/// Each class is shuffled by the stream seeded with `seed`; the classes are
/// laid end to end and dealt round-robin to the folds. Per class, every fold
/// receives the floor or the ceiling of `count / folds` instances, which is
/// the largest-remainder apportionment with the remainders rotated across
/// folds. Held-out lists are sorted ascending.
pub fn stratified_folds(d: &Dataset, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let folds = effective_folds(d, folds)?;
    let mut rng = rng_from_seed(seed);
    let mut held_out = vec![Vec::new(); folds];
    let mut position = 0usize;
    for mut members in d.class_indices() {
        members.shuffle(&mut rng);
        for i in members {
            held_out[position % folds].push(i);
            position += 1;
        }
    }
    for fold in &mut held_out {
        fold.sort_unstable();
    }
    Ok(held_out)
}

/// Complement of a sorted held-out list within `0..n`.
pub fn complement(held_out: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - held_out.len());
    let mut k = 0;
    for i in 0..n {
        if k < held_out.len() && held_out[k] == i {
            k += 1;
        } else {
            out.push(i);
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::string::ToString;

    /// One-attribute dataset whose attribute equals the instance index.
    pub fn with_counts(name: &str, counts: &[usize]) -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (j, &k) in counts.iter().enumerate() {
            for _ in 0..k {
                rows.push(vec![rows.len() as f64]);
                labels.push(j);
            }
        }
        let classes = (0..counts.len()).map(|j| format!("c{j}")).collect();
        Dataset::new(name, vec!["x".to_string()], classes, rows, labels).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::with_counts;
    use super::*;

    #[test]
    fn class_distribution_examples() {
        assert_eq!(class_distribution(&with_counts("d", &[6, 4])), vec![0.6, 0.4]);
        assert_eq!(
            class_distribution(&with_counts("d", &[1, 1, 2])),
            vec![0.25, 0.25, 0.5]
        );
    }

    #[test]
    fn rejects_single_class_and_unseen_classes() {
        let one_class = Dataset::new(
            "d",
            vec!["x".into()],
            vec!["a".into()],
            vec![vec![1.0], vec![2.0]],
            vec![0, 0],
        );
        assert!(matches!(one_class, Err(Error::InvalidDataset(_))));
        let unseen = Dataset::new(
            "d",
            vec!["x".into()],
            vec!["x".into(), "y".into(), "z".into()],
            vec![vec![1.0], vec![2.0]],
            vec![1, 1],
        );
        match unseen {
            Err(Error::InvalidDataset(msg)) => assert!(msg.contains("x,z"), "{msg}"),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let d = Dataset::new(
            "d",
            vec!["x".into()],
            vec!["a".into(), "b".into()],
            vec![vec![1.0], vec![f64::NAN]],
            vec![0, 1],
        );
        assert!(d.is_err());
    }

    #[test]
    fn resample_exact_halves() {
        let d = with_counts("d", &[6, 4]);
        let s = stratified_resample(&d, 0, 0.5).unwrap();
        assert_eq!(s.train.class_counts(), vec![3, 2]);
        assert_eq!(s.test.class_counts(), vec![3, 2]);
    }

    #[test]
    fn resample_largest_remainder_tie() {
        let d = with_counts("d", &[5, 2]);
        let s = stratified_resample(&d, 7, 0.5).unwrap();
        assert_eq!(s.train.class_counts(), vec![3, 1]);
        assert_eq!(s.test.class_counts(), vec![2, 1]);
    }

    #[test]
    fn resample_is_deterministic_and_partitions() {
        let d = with_counts("d", &[9, 7, 5]);
        let a = stratified_resample(&d, 3, 0.5).unwrap();
        let b = stratified_resample(&d, 3, 0.5).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.train_indices.iter().chain(&a.test_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.n()).collect::<Vec<_>>());
        for (k, &i) in a.train_indices.iter().enumerate() {
            assert_eq!(a.train.row(k), d.row(i));
        }
    }

    #[test]
    fn resample_rejects_singleton_class() {
        let d = with_counts("d", &[5, 1]);
        assert!(matches!(
            stratified_resample(&d, 0, 0.5),
            Err(Error::TooFewInstances { class: 1, .. })
        ));
        assert!(stratified_resample(&with_counts("d", &[5, 5]), 0, 1.0).is_err());
    }

    #[test]
    fn folds_are_stratified_and_cover() {
        let d = with_counts("d", &[10, 7, 3]);
        let folds = stratified_folds(&d, 10, 11).unwrap();
        assert_eq!(folds.len(), 3);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.n()).collect::<Vec<_>>());
        for fold in &folds {
            let mut per_class = [0usize; 3];
            for &i in fold {
                per_class[d.label(i)] += 1;
            }
            assert!(per_class[0] == 3 || per_class[0] == 4);
            assert!(per_class[1] == 2 || per_class[1] == 3);
            assert_eq!(per_class[2], 1);
        }
        assert_eq!(complement(&[1, 3], 5), vec![0, 2, 4]);
    }
}
