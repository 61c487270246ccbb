//! DeLong variance estimates for AUC comparisons, via structural
//! components (placement values).

use super::roc::roc_auc;
use crate::error::Result;
use statrs::distribution::{ContinuousCDF, Normal};

fn psi(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// Placement values: for every positive, the fraction of negatives it
/// outranks (V10), and for every negative, the fraction of positives
/// ranking above it (V01).
fn placements(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let v10 = pos
        .iter()
        .map(|&x| neg.iter().map(|&y| psi(x, y)).sum::<f64>() / neg.len() as f64)
        .collect();
    let v01 = neg
        .iter()
        .map(|&y| pos.iter().map(|&x| psi(x, y)).sum::<f64>() / pos.len() as f64)
        .collect();
    (v10, v01)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

fn two_sided_p(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - normal.cdf(z.abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct DelongPaired {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    pub p: f64,
}

/// Paired comparison of two models scored on the same blocks.
pub fn delong_paired(scores_a: &[f64], scores_b: &[f64], labels: &[bool]) -> Result<DelongPaired> {
    if scores_a.len() != scores_b.len() || scores_a.len() != labels.len() {
        return Err(crate::error::SctError::Input("delong_paired: length mismatch".into()));
    }
    let auc_a = roc_auc(scores_a, labels)?.auc;
    let auc_b = roc_auc(scores_b, labels)?.auc;
    let (v10_a, v01_a) = placements(scores_a, labels);
    let (v10_b, v01_b) = placements(scores_b, labels);
    let m = v10_a.len() as f64;
    let n = v01_a.len() as f64;

    let s10 = covariance(&v10_a, &v10_a) + covariance(&v10_b, &v10_b)
        - 2.0 * covariance(&v10_a, &v10_b);
    let s01 = covariance(&v01_a, &v01_a) + covariance(&v01_b, &v01_b)
        - 2.0 * covariance(&v01_a, &v01_b);
    let var = s10 / m + s01 / n;

    let diff = auc_a - auc_b;
    let (z, p) = if var <= 1e-300 {
        if diff.abs() < 1e-15 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY * diff.signum(), 0.0)
        }
    } else {
        let z = diff / var.sqrt();
        (z, two_sided_p(z))
    };
    Ok(DelongPaired { auc_a, auc_b, z, p })
}

#[derive(Debug, Clone, Copy)]
pub struct DelongUnpaired {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    pub p: f64,
}

/// Unpaired comparison of two models scored on independent samples.
pub fn delong_unpaired(
    scores_a: &[f64],
    labels_a: &[bool],
    scores_b: &[f64],
    labels_b: &[bool],
) -> Result<DelongUnpaired> {
    let auc_a = roc_auc(scores_a, labels_a)?.auc;
    let auc_b = roc_auc(scores_b, labels_b)?.auc;
    let var_of = |scores: &[f64], labels: &[bool]| {
        let (v10, v01) = placements(scores, labels);
        covariance(&v10, &v10) / v10.len() as f64 + covariance(&v01, &v01) / v01.len() as f64
    };
    let var = var_of(scores_a, labels_a) + var_of(scores_b, labels_b);
    let diff = auc_a - auc_b;
    let (z, p) = if var <= 1e-300 {
        if diff.abs() < 1e-15 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY * diff.signum(), 0.0)
        }
    } else {
        let z = diff / var.sqrt();
        (z, two_sided_p(z))
    };
    Ok(DelongUnpaired { auc_a, auc_b, z, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_score_vectors_give_p_one() {
        let scores = [0.1, 0.9, 0.3, 0.7, 0.2, 0.8];
        let labels = [false, true, false, true, false, true];
        let r = delong_paired(&scores, &scores, &labels).unwrap();
        assert_eq!(r.p, 1.0);
        assert_eq!(r.auc_a, r.auc_b);
    }

    #[test]
    fn reported_auc_matches_roc_auc_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores_a: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let scores_b: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let r = delong_paired(&scores_a, &scores_b, &labels).unwrap();
        assert_eq!(r.auc_a, roc_auc(&scores_a, &labels).unwrap().auc);
        assert_eq!(r.auc_b, roc_auc(&scores_b, &labels).unwrap().auc);
    }

    #[test]
    fn identical_datasets_unpaired_give_p_one() {
        let scores = [0.1, 0.9, 0.3, 0.7];
        let labels = [false, true, false, true];
        let r = delong_unpaired(&scores, &labels, &scores, &labels).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn separable_vs_random_is_significant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100;
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let separable: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let random: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = delong_unpaired(&separable, &labels, &random, &labels).unwrap();
        assert!(r.p < 0.01, "p = {}", r.p);
    }

    #[test]
    fn variances_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(6..80);
            let scores: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let (v10, v01) = placements(&scores, &labels);
            assert!(covariance(&v10, &v10) >= 0.0);
            assert!(covariance(&v01, &v01) >= 0.0);
        }
    }
}
