//! Per-class ROC-AUC (Mann-Whitney formulation), macro averaging and the
//! results table.

mod table;

pub use table::{assemble_table, ResultsTable, TableRow, RESULTS_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, N_CLASSES, SUPERCLASSES};

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half. `None` when the labels
/// contain only one class.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * positives as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * n)))
}

/// Evaluation summary for one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Per-class AUC in superclass order; `None` for undefined classes.
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: f64,
    pub n_eval: usize,
    /// Classes left out of the macro average.
    pub skipped: Vec<String>,
    pub subset: usize,
    pub pseudo: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Macro AUC over the columns of row-major `[n x 5]` score and label
/// matrices.
pub fn macro_auc(scores: &[f64], labels: &[u8], n: usize) -> Result<EvalReport> {
    if scores.len() != n * N_CLASSES || labels.len() != n * N_CLASSES {
        return Err(Error::shape(format!(
            "expected {n}x{N_CLASSES} scores and labels, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    let mut per_class = Vec::with_capacity(N_CLASSES);
    let mut skipped = Vec::new();
    for c in 0..N_CLASSES {
        let s: Vec<f64> = (0..n).map(|i| scores[i * N_CLASSES + c]).collect();
        let l: Vec<u8> = (0..n).map(|i| labels[i * N_CLASSES + c]).collect();
        let auc = roc_auc(&s, &l)?;
        if auc.is_none() {
            skipped.push(SUPERCLASSES[c].to_string());
        }
        per_class.push(auc);
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::NoDefinedClass);
    }
    Ok(EvalReport {
        macro_auc: defined.iter().sum::<f64>() / defined.len() as f64,
        per_class,
        n_eval: n,
        skipped,
        subset: 0,
        pseudo: false,
        seed: None,
        config_hash: None,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// O(n^2) count over all positive-negative pairs.
    fn pairwise(scores: &[f64], labels: &[u8]) -> Option<f64> {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if li != 1 {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        (pairs > 0.0).then(|| num / pairs)
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), Some(1.0));
    }

    #[test]
    fn all_ties_give_half() {
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), Some(0.5));
    }

    #[test]
    fn single_class_is_undefined() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[1, 1]).unwrap(), None);
        assert_eq!(roc_auc(&[0.1, 0.2], &[0, 0]).unwrap(), None);
        assert!(roc_auc(&[0.1], &[1, 0]).is_err());
    }

    #[test]
    fn matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.gen_range(2..=50);
            // coarse grid to force ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..12) as f64) / 4.0).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let fast = roc_auc(&scores, &labels).unwrap();
            match (fast, pairwise(&scores, &labels)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                (a, b) => assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn macro_average_and_skips() {
        let labels = [
            1, 0, 1, 0, 0, //
            0, 0, 1, 1, 0, //
            1, 0, 0, 1, 0, //
            0, 0, 0, 0, 0,
        ];
        // perfect scores per class = the labels themselves
        let scores: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        let r = macro_auc(&scores, &labels, 4).unwrap();
        assert_eq!(r.macro_auc, 1.0);
        assert_eq!(r.skipped, vec!["MI", "HYP"]);
        assert_eq!(r.per_class[1], None);
        assert!(macro_auc(&[0.0; 5], &[0; 5], 1).is_err());
    }

    #[test]
    fn macro_matches_mean_of_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40;
        let scores: Vec<f64> = (0..n * 5).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n * 5).map(|_| rng.gen_range(0..2)).collect();
        let r = macro_auc(&scores, &labels, n).unwrap();
        let mut acc = 0.0;
        for c in 0..5 {
            let s: Vec<f64> = (0..n).map(|i| scores[i * 5 + c]).collect();
            let l: Vec<u8> = (0..n).map(|i| labels[i * 5 + c]).collect();
            acc += pairwise(&s, &l).unwrap();
        }
        assert!((r.macro_auc - acc / 5.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_invariances(
            pairs in prop::collection::vec((-100.0f64..100.0, 0u8..2), 2..60),
            perm_seed in any::<u64>(),
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            let base = roc_auc(&scores, &labels).unwrap();
            prop_assume!(base.is_some());
            let base = base.unwrap();

            // strictly monotone transform
            let transformed: Vec<f64> = scores.iter().map(|s| (s / 50.0).exp() * 3.0 - 7.0).collect();
            prop_assert_eq!(roc_auc(&transformed, &labels).unwrap().unwrap(), base);

            // complement labels (tie-free scores)
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] < w[1]) {
                let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
                let other = roc_auc(&scores, &flipped).unwrap().unwrap();
                prop_assert!((base + other - 1.0).abs() < 1e-12);
            }

            // joint permutation
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            let ps: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let pl: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            prop_assert!((roc_auc(&ps, &pl).unwrap().unwrap() - base).abs() < 1e-12);

            // duplicated class columns
            let n = scores.len();
            let mut ms = Vec::with_capacity(n * 5);
            let mut ml = Vec::with_capacity(n * 5);
            for i in 0..n {
                ms.extend(std::iter::repeat(scores[i]).take(5));
                ml.extend(std::iter::repeat(labels[i]).take(5));
            }
            prop_assert!((macro_auc(&ms, &ml, n).unwrap().macro_auc - base).abs() < 1e-12);
        }
    }
}
