#![allow(clippy::needless_range_loop)]

use hesca_core::data::{class_distribution, stratified_folds, stratified_resample, Dataset};
use hesca_core::ensemble::{combine, CombineMode};
use hesca_core::metrics::{binary_auroc, roc_curve, squash};
use hesca_core::stats::{
    average_ranks, form_cliques, friedman_test, holm_correction, wilcoxon_exact, ResultsMatrix,
};
use hesca_core::ProbVector;
use proptest::prelude::*;

fn dataset(counts: &[usize], name: &str) -> Dataset {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (j, &k) in counts.iter().enumerate() {
        for i in 0..k {
            rows.push(vec![(j * 1000 + i) as f64]);
            labels.push(j);
        }
    }
    Dataset::new(
        name,
        vec!["x".into()],
        (0..counts.len()).map(|j| format!("c{j}")).collect(),
        rows,
        labels,
    )
    .unwrap()
}

fn prob_vector(c: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.0f64..1.0, c).prop_filter_map("positive mass", |w| ProbVector::from_weights(w).ok())
}

/// Brute-force probability that a positive outscores a negative.
fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Two-sided signed-rank p-value by enumerating all sign assignments.
fn enumerated_wilcoxon(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let observed: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn resample_partitions_and_stratifies(
        counts in prop::collection::vec(2usize..30, 2..6),
        id in 0u64..1000,
        proportion in 0.2f64..0.8,
    ) {
        let d = dataset(&counts, "p");
        let split = match stratified_resample(&d, id, proportion) {
            Ok(s) => s,
            // a class too small to land on both sides is a documented error
            Err(_) => return Ok(()),
        };
        prop_assert_eq!(split.train.n() + split.test.n(), d.n());
        let mut all: Vec<usize> = split.train_indices.iter().chain(&split.test_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.n()).collect::<Vec<_>>());
        for (j, &k) in split.train.class_counts().iter().enumerate() {
            prop_assert!((k as f64 - counts[j] as f64 * proportion).abs() < 1.0);
        }
        prop_assert_eq!(split.train.n(), (d.n() as f64 * proportion + 0.5).floor() as usize);
        prop_assert_eq!(stratified_resample(&d, id, proportion).unwrap(), split);
    }

    #[test]
    fn class_distribution_sums_to_one(counts in prop::collection::vec(1usize..50, 2..8)) {
        let s: f64 = class_distribution(&dataset(&counts, "c")).iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn folds_cover_every_instance_once(counts in prop::collection::vec(2usize..25, 2..5), seed in any::<u64>()) {
        let d = dataset(&counts, "f");
        let folds = stratified_folds(&d, 10, seed).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d.n()).collect::<Vec<_>>());
        let k = folds.len();
        for (j, &count) in counts.iter().enumerate() {
            for fold in &folds {
                let in_fold = fold.iter().filter(|&&i| d.label(i) == j).count();
                prop_assert!(in_fold == count / k || in_fold == count / k + 1);
            }
        }
    }

    #[test]
    fn combine_is_scale_invariant_and_valid(
        dists in prop::collection::vec(prob_vector(4), 1..6),
        raw in prop::collection::vec(0.01f64..1.0, 6),
        alpha in 0.0f64..12.0,
        lambda in prop::sample::select(vec![0.001, 1000.0]),
    ) {
        let weights = &raw[..dists.len()];
        let refs: Vec<&ProbVector> = dists.iter().collect();
        let base = combine(weights, alpha, &refs, CombineMode::Probability).unwrap();
        let scaled: Vec<f64> = weights.iter().map(|w| w * lambda).collect();
        let other = combine(&scaled, alpha, &refs, CombineMode::Probability).unwrap();
        for (a, b) in base.as_slice().iter().zip(other.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(ProbVector::new(base.into_vec()).is_ok());
    }

    #[test]
    fn auroc_matches_pairwise_oracle(
        scores in prop::collection::vec(0u8..8, 2..30),
        flips in prop::collection::vec(any::<bool>(), 30),
    ) {
        let labels: Vec<bool> = flips[..scores.len()].to_vec();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let s: Vec<f64> = scores.iter().map(|&v| v as f64 / 7.0).collect();
        let auc = binary_auroc(&s, &labels).unwrap();
        prop_assert!((auc - pairwise_auroc(&s, &labels)).abs() <= 1e-12);
        // strictly increasing transform leaves it unchanged
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 2.0).collect();
        prop_assert_eq!(binary_auroc(&t, &labels).unwrap(), auc);
        let curve = roc_curve(&s, &labels).unwrap().points;
        prop_assert_eq!(curve[0], (0.0, 0.0));
        prop_assert_eq!(*curve.last().unwrap(), (1.0, 1.0));
        for w in curve.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn squash_respects_floor(p in prob_vector(6)) {
        let q = squash(p.as_slice()).unwrap();
        prop_assert!(q.iter().all(|v| *v >= 0.01 - 1e-12));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn exact_wilcoxon_matches_enumeration(diffs in prop::collection::vec(-4i32..=4, 1..=12)) {
        prop_assume!(diffs.iter().any(|&d| d != 0));
        let a: Vec<f64> = diffs.iter().map(|&d| d as f64 * 0.5).collect();
        let b = vec![0.0; a.len()];
        let p = wilcoxon_exact(&a, &b).unwrap();
        prop_assert!((p - enumerated_wilcoxon(&a)).abs() <= 1e-9);
    }

    #[test]
    fn holm_is_monotone(p in prop::collection::vec(0.0f64..0.2, 1..8), i in 0usize..8, factor in 0.0f64..1.0) {
        let before = holm_correction(&p, 0.05);
        let mut lowered = p.clone();
        let i = i % p.len();
        lowered[i] *= factor;
        let after = holm_correction(&lowered, 0.05);
        for (b, a) in before.iter().zip(&after) {
            prop_assert!(!b || *a);
        }
    }

    #[test]
    fn friedman_ranks_ignore_row_shifts(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 2..8),
        shift in -5.0f64..5.0,
        row in 0usize..8,
    ) {
        let m = ResultsMatrix::from_rows(&rows, true).unwrap();
        let mut shifted = rows.clone();
        let row = row % rows.len();
        shifted[row].iter_mut().for_each(|v| *v += shift);
        let a = friedman_test(&m).unwrap();
        let b = friedman_test(&ResultsMatrix::from_rows(&shifted, true).unwrap()).unwrap();
        // a shift can only merge scores that differ by rounding
        let distinct = |r: &[f64]| { let mut s = r.to_vec(); s.sort_by(f64::total_cmp); s.dedup(); s.len() };
        prop_assume!(distinct(&rows[row]) == distinct(&shifted[row]));
        prop_assert!((a.chi_square - b.chi_square).abs() < 1e-9);
        let total: f64 = m.ranks().iter().flatten().sum();
        prop_assert!((total - (rows.len() * 4 * 5 / 2) as f64).abs() < 1e-9);
    }

    #[test]
    fn cliques_are_contiguous_and_unrejected(
        ranks in prop::collection::vec(1.0f64..6.0, 3..7),
        raw in prop::collection::vec(0.0f64..0.1, 21),
    ) {
        let k = ranks.len();
        let mut p = vec![vec![1.0; k]; k];
        let mut it = raw.iter();
        for i in 0..k {
            for j in i + 1..k {
                let v = *it.next().unwrap();
                p[i][j] = v;
                p[j][i] = v;
            }
        }
        let cd = form_cliques(&ranks, &p, 0.05).unwrap();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]));
        let mut pairs = Vec::new();
        let mut flat = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                pairs.push((i, j));
                flat.push(p[i][j]);
            }
        }
        let rejected = holm_correction(&flat, 0.05);
        for clique in &cd.cliques {
            let start = order.iter().position(|&c| c == clique[0]).unwrap();
            prop_assert_eq!(&order[start..start + clique.len()], &clique[..]);
            for (x, &a) in clique.iter().enumerate() {
                for &b in &clique[x + 1..] {
                    let idx = pairs.iter().position(|&pr| pr == (a.min(b), a.max(b))).unwrap();
                    prop_assert!(!rejected[idx]);
                }
            }
        }
    }
}
