//! Quadratically weighted Cohen's kappa with a seeded percentile-bootstrap
//! confidence interval.

use crate::error::{Result, SctError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_BOOTSTRAP_SEED: u64 = 0x6b61_7070_61;
const BOOTSTRAP_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy)]
pub struct KappaResult {
    pub kappa: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Point estimate over one sample; `None` when the weighted expected
/// disagreement is zero (degenerate marginals).
fn kappa_point(pred: &[usize], actual: &[usize], n_categories: usize) -> Option<f64> {
    let n = pred.len() as f64;
    let mut observed = vec![0.0f64; n_categories * n_categories];
    let mut marg_pred = vec![0.0f64; n_categories];
    let mut marg_actual = vec![0.0f64; n_categories];
    for (&p, &a) in pred.iter().zip(actual) {
        observed[p * n_categories + a] += 1.0 / n;
        marg_pred[p] += 1.0 / n;
        marg_actual[a] += 1.0 / n;
    }
    let w = |i: usize, j: usize| {
        let d = i as f64 - j as f64;
        d * d / ((n_categories - 1) as f64 * (n_categories - 1) as f64)
    };
    let mut wo = 0.0;
    let mut we = 0.0;
    for i in 0..n_categories {
        for j in 0..n_categories {
            wo += w(i, j) * observed[i * n_categories + j];
            we += w(i, j) * marg_pred[i] * marg_actual[j];
        }
    }
    if we == 0.0 {
        // zero weighted expected disagreement happens only when both raters
        // are constant on the same category
        return None;
    }
    Some(1.0 - wo / we)
}

/// Quadratic kappa with a 95% percentile-bootstrap CI (2000 resamples,
/// default seed).
pub fn quadratic_kappa(pred: &[usize], actual: &[usize], n_categories: usize) -> Result<KappaResult> {
    quadratic_kappa_seeded(pred, actual, n_categories, DEFAULT_BOOTSTRAP_SEED)
}

pub fn quadratic_kappa_seeded(
    pred: &[usize],
    actual: &[usize],
    n_categories: usize,
    seed: u64,
) -> Result<KappaResult> {
    if pred.len() != actual.len() {
        return Err(SctError::Input("kappa: length mismatch".into()));
    }
    if pred.len() < 2 {
        return Err(SctError::Input("kappa: need at least two items".into()));
    }
    if n_categories < 2 {
        return Err(SctError::Input("kappa: need at least two categories".into()));
    }
    if pred.iter().chain(actual).any(|&v| v >= n_categories) {
        return Err(SctError::Input("kappa: category index out of range".into()));
    }
    let n = pred.len();
    let point = match kappa_point(pred, actual, n_categories) {
        Some(k) => k,
        None => {
            return Err(SctError::Data(
                "kappa: degenerate marginals (zero weighted expected disagreement)".into(),
            ))
        }
    };

    // percentile bootstrap over item resamples; degenerate resamples count
    // as perfect agreement (they are single-cell by construction)
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut rp = vec![0usize; n];
    let mut ra = vec![0usize; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for i in 0..n {
            let j = rng.gen_range(0..n);
            rp[i] = pred[j];
            ra[i] = actual[j];
        }
        let k = kappa_point(&rp, &ra, n_categories).unwrap_or(1.0);
        draws.push(k);
    }
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| {
        let idx = ((draws.len() as f64 - 1.0) * q).round() as usize;
        draws[idx]
    };
    Ok(KappaResult { kappa: point, ci_low: pick(0.025), ci_high: pick(0.975) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement_is_one_with_degenerate_interval() {
        let pred = [0usize, 1, 2, 1, 0, 2, 2, 1];
        let r = quadratic_kappa(&pred, &pred, 3).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert_eq!((r.ci_low, r.ci_high), (1.0, 1.0));
    }

    /// Hand-computed 4-item case: pred [0,1,2,2], actual [0,2,2,2].
    /// Weighted observed disagreement 1/16, weighted expected 3/8,
    /// kappa = 1 - (1/16)/(3/8) = 5/6.
    #[test]
    fn four_item_hand_example() {
        let pred = [0usize, 1, 2, 2];
        let actual = [0usize, 2, 2, 2];
        let r = quadratic_kappa(&pred, &actual, 3).unwrap();
        assert!((r.kappa - 5.0 / 6.0).abs() < 1e-15, "kappa {}", r.kappa);
        assert!(r.ci_low <= r.kappa && r.kappa <= r.ci_high);
    }

    #[test]
    fn reversed_order_is_worse_than_chance() {
        let actual: Vec<usize> = (0..12).map(|i| i % 4).collect();
        let pred: Vec<usize> = actual.iter().map(|&a| 3 - a).collect();
        let r = quadratic_kappa(&pred, &actual, 4).unwrap();
        assert!(r.kappa < 0.0, "kappa {}", r.kappa);
    }

    #[test]
    fn relabeling_both_raters_with_the_reversing_map_is_symmetric() {
        let pred = [0usize, 1, 2, 2, 3, 0, 1, 3];
        let actual = [0usize, 2, 2, 1, 3, 1, 1, 2];
        let a = quadratic_kappa(&pred, &actual, 4).unwrap().kappa;
        let rp: Vec<usize> = pred.iter().map(|&v| 3 - v).collect();
        let ra: Vec<usize> = actual.iter().map(|&v| 3 - v).collect();
        let b = quadratic_kappa(&rp, &ra, 4).unwrap().kappa;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn constant_raters_are_degenerate() {
        let pred = [1usize; 6];
        let actual = [1usize; 6];
        assert!(quadratic_kappa(&pred, &actual, 3).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic_for_a_seed() {
        let pred = [0usize, 1, 2, 2, 1, 0, 2, 1, 0, 2];
        let actual = [0usize, 2, 2, 2, 1, 1, 2, 0, 0, 1];
        let a = quadratic_kappa_seeded(&pred, &actual, 3, 42).unwrap();
        let b = quadratic_kappa_seeded(&pred, &actual, 3, 42).unwrap();
        assert_eq!((a.ci_low, a.ci_high), (b.ci_low, b.ci_high));
    }
}
