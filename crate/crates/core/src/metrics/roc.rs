//! ROC analysis via the rank-sum (Mann-Whitney) estimator, ties counted as
//! one half.

use crate::error::{Result, SctError};

#[derive(Debug, Clone, Copy)]
pub struct RocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone)]
pub struct RocResult {
    pub auc: f64,
    /// One operating point per unique score, descending by threshold.
    pub points: Vec<RocPoint>,
}

/// AUC equals the probability that a random positive outranks a random
/// negative, ties counted half. Computed from average ranks, so it matches
/// pair counting exactly.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(SctError::Input("roc_auc: scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SctError::Input(
            "roc_auc: AUC undefined with a single class present".into(),
        ));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(SctError::Input("roc_auc: non-finite score".into()));
    }

    // average ranks (1-based), ties share the mean rank of their run
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);

    // operating points: one per unique score, prediction = score >= threshold
    let mut uniq: Vec<f64> = scores.to_vec();
    uniq.sort_by(|a, b| b.partial_cmp(a).unwrap());
    uniq.dedup();
    let points = uniq
        .into_iter()
        .map(|thr| {
            let c = confusion_at(scores, labels, thr);
            RocPoint { threshold: thr, sensitivity: c.sensitivity, specificity: c.specificity }
        })
        .collect();

    Ok(RocResult { auc, points })
}

#[derive(Debug, Clone, Copy)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Confusion counts at a threshold; prediction is `score >= threshold`.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let sensitivity = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let specificity = if tn + fp > 0 { tn as f64 / (tn + fp) as f64 } else { 0.0 };
    Confusion { tp, fp, tn, fn_, sensitivity, specificity }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force pair counting, the oracle for the rank-sum estimator.
    pub(crate) fn auc_pair_counting(scores: &[f64], labels: &[bool]) -> f64 {
        let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
        let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
        let mut acc = 0.0;
        for &p in &pos {
            for &n in &neg {
                acc += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        acc / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn perfectly_separated_scores_give_one() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 1.0);
    }

    #[test]
    fn constant_scores_give_half() {
        let scores = [0.5; 6];
        let labels = [true, false, true, false, true, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 0.5);
    }

    #[test]
    fn four_point_example() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&scores, &labels).unwrap().auc, 0.75);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(roc_auc(&[0.1, 0.9], &[true, true]).is_err());
    }

    #[test]
    fn published_operating_point_sensitivity() {
        // 209 true positives, 11 false negatives -> sensitivity 0.950
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..209 {
            scores.push(0.9);
            labels.push(true);
        }
        for _ in 0..11 {
            scores.push(0.1);
            labels.push(true);
        }
        for _ in 0..655 {
            scores.push(0.1);
            labels.push(false);
        }
        for _ in 0..15 {
            scores.push(0.9);
            labels.push(false);
        }
        let c = confusion_at(&scores, &labels, 0.5);
        assert_eq!((c.tp, c.fn_, c.tn, c.fp), (209, 11, 655, 15));
        assert!((c.sensitivity - 0.950).abs() < 1e-9);
        assert!((c.specificity - 655.0 / 670.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_zero_calls_everything_positive() {
        let scores = [0.2, 0.7];
        let labels = [false, true];
        let c = confusion_at(&scores, &labels, 0.0);
        assert_eq!(c.specificity, 0.0);
        assert_eq!(c.sensitivity, 1.0);
    }

    proptest! {
        #[test]
        fn rank_method_matches_pair_counting(seed in 0u64..300) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..=120usize);
            // coarse grid forces plenty of ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..=10) as f64) / 10.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let got = roc_auc(&scores, &labels).unwrap().auc;
            let want = auc_pair_counting(&scores, &labels);
            prop_assert!((got - want).abs() <= 1e-12);
        }

        #[test]
        fn negating_tie_free_scores_flips_auc(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..=60usize);
            let mut scores: Vec<f64> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            while scores.len() < n {
                let v: f64 = rng.gen_range(0.0..1.0);
                if seen.insert(v.to_bits()) {
                    scores.push(v);
                }
            }
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let a = roc_auc(&scores, &labels).unwrap().auc;
            let neg: Vec<f64> = scores.iter().map(|v| -v).collect();
            let b = roc_auc(&neg, &labels).unwrap().auc;
            prop_assert!((a - (1.0 - b)).abs() <= 1e-12);
        }

        #[test]
        fn auc_is_invariant_under_monotone_transforms(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..=60usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let a = roc_auc(&scores, &labels).unwrap().auc;
            let transformed: Vec<f64> = scores.iter().map(|v| (v * 0.7).exp() + 2.0).collect();
            let b = roc_auc(&transformed, &labels).unwrap().auc;
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
