//! Dual-model triage: combine a sensitive and a specific model's scores
//! into rule-out / rule-in / equivocal decisions, sweep symmetric
//! thresholds, and pick an operating point under error constraints.

use crate::error::{Result, SctError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// The sensitive model is confident the block is benign; skip IHC.
    RuleOutBenign,
    /// The specific model is confident the block is carcinoma; skip IHC.
    RuleInCarcinoma,
    /// No confident call; the block goes to IHC.
    Equivocal,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::RuleOutBenign => "rule-out-benign",
            Decision::RuleInCarcinoma => "rule-in-carcinoma",
            Decision::Equivocal => "equivocal",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScreeningOutcome {
    pub decision: Decision,
    pub p_sensitive: f64,
    pub p_specific: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// Decide one block. A rule-out requires the sensitive score below `t_lo`
/// with no strong disagreement from the specific model; a rule-in requires
/// the specific score above `t_hi` with no strong disagreement from the
/// sensitive model. Contradicting confident calls fail safe to equivocal.
pub fn dual_decide(
    p_sensitive: f64,
    p_specific: f64,
    t_lo: f64,
    t_hi: f64,
) -> Result<ScreeningOutcome> {
    if !(0.0 <= t_lo && t_lo <= t_hi && t_hi <= 1.0) {
        return Err(SctError::Config(format!(
            "thresholds out of order: t_lo {t_lo}, t_hi {t_hi}"
        )));
    }
    let decision = if p_sensitive < t_lo && p_specific < t_hi {
        Decision::RuleOutBenign
    } else if p_specific > t_hi && p_sensitive >= t_lo {
        Decision::RuleInCarcinoma
    } else {
        // includes the contradiction p_sensitive < t_lo && p_specific > t_hi
        Decision::Equivocal
    };
    Ok(ScreeningOutcome { decision, p_sensitive, p_specific, t_lo, t_hi })
}

/// One point of the symmetric threshold sweep at `tau`
/// (`t_lo = 1 - tau`, `t_hi = tau`).
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub tau: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Rule-ins among decided carcinoma blocks.
    pub tpr: f64,
    /// False rule-ins over all true-benign blocks.
    pub fpr: f64,
    /// Rule-outs among decided benign blocks.
    pub tnr: f64,
    /// False rule-outs over all true-carcinoma blocks.
    pub fnr: f64,
    /// Decided fraction among true-benign blocks.
    pub screened_benign: f64,
    /// Decided fraction among true-carcinoma blocks.
    pub screened_carcinoma: f64,
    /// Decided fraction over all blocks.
    pub screened_total: f64,
    /// (FN + FP) / decided blocks.
    pub total_error_screened: f64,
    /// (FN + FP) / all blocks.
    pub total_error_all: f64,
}

#[derive(Debug, Clone)]
pub struct SweepCurves {
    pub points: Vec<SweepPoint>,
    pub n_benign: usize,
    pub n_carcinoma: usize,
}

/// Default grid: tau from 0.505 to 0.995 in steps of 0.0025, plus the two
/// reference points 0.99 and 0.999 (199 entries, kept as stated even though
/// 0.99 already lies on the grid).
pub fn default_tau_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=196).map(|k| (5050 + 25 * k) as f64 / 10000.0).collect();
    grid.push(0.99);
    grid.push(0.999);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid
}

/// Sweep symmetric thresholds over aligned score/label arrays.
pub fn threshold_sweep(
    p_sensitive: &[f64],
    p_specific: &[f64],
    labels: &[bool],
    grid: &[f64],
) -> Result<SweepCurves> {
    if p_sensitive.len() != p_specific.len() || p_sensitive.len() != labels.len() {
        return Err(SctError::Input("threshold_sweep: length mismatch".into()));
    }
    if p_sensitive.is_empty() {
        return Err(SctError::Input("threshold_sweep: empty inputs".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(SctError::Input("threshold_sweep: grid must be sorted ascending".into()));
    }
    let n = labels.len();
    let n_carcinoma = labels.iter().filter(|&&l| l).count();
    let n_benign = n - n_carcinoma;

    let mut points = Vec::with_capacity(grid.len());
    for &tau in grid {
        let (t_lo, t_hi) = (1.0 - tau, tau);
        let mut rule_in_carc = 0usize; // true positives among rule-ins
        let mut rule_in_benign = 0usize; // false positives
        let mut rule_out_benign = 0usize; // true negatives among rule-outs
        let mut rule_out_carc = 0usize; // false negatives
        for i in 0..n {
            let outcome = dual_decide(p_sensitive[i], p_specific[i], t_lo, t_hi)?;
            match (outcome.decision, labels[i]) {
                (Decision::RuleInCarcinoma, true) => rule_in_carc += 1,
                (Decision::RuleInCarcinoma, false) => rule_in_benign += 1,
                (Decision::RuleOutBenign, false) => rule_out_benign += 1,
                (Decision::RuleOutBenign, true) => rule_out_carc += 1,
                (Decision::Equivocal, _) => {}
            }
        }
        let decided_carc = rule_in_carc + rule_out_carc;
        let decided_benign = rule_in_benign + rule_out_benign;
        let decided = decided_carc + decided_benign;
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        // rates among decided blocks; no decisions means no errors
        let rate_or_one = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        points.push(SweepPoint {
            tau,
            t_lo,
            t_hi,
            tpr: rate_or_one(rule_in_carc, decided_carc),
            fpr: frac(rule_in_benign, n_benign),
            tnr: rate_or_one(rule_out_benign, decided_benign),
            fnr: frac(rule_out_carc, n_carcinoma),
            screened_benign: frac(decided_benign, n_benign),
            screened_carcinoma: frac(decided_carc, n_carcinoma),
            screened_total: frac(decided, n),
            total_error_screened: frac(rule_out_carc + rule_in_benign, decided),
            total_error_all: frac(rule_out_carc + rule_in_benign, n),
        });
    }
    Ok(SweepCurves { points, n_benign, n_carcinoma })
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdChoice {
    pub tau: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub feasible: bool,
    pub point: SweepPoint,
}

/// Most permissive grid point (maximizing the total screened fraction,
/// ties to the smaller `tau`) whose FNR and FPR satisfy the caps. Without a
/// feasible point, returns the strictest grid point flagged infeasible.
pub fn choose_thresholds(
    curves: &SweepCurves,
    max_fnr: f64,
    max_fpr: f64,
) -> Result<ThresholdChoice> {
    if curves.points.is_empty() {
        return Err(SctError::Input("choose_thresholds: empty curves".into()));
    }
    if !(0.0..=1.0).contains(&max_fnr) || !(0.0..=1.0).contains(&max_fpr) {
        return Err(SctError::Config("choose_thresholds: constraints must lie in [0, 1]".into()));
    }
    let mut best: Option<&SweepPoint> = None;
    for p in &curves.points {
        if p.fnr <= max_fnr && p.fpr <= max_fpr {
            let better = match best {
                None => true,
                Some(b) => p.screened_total > b.screened_total,
            };
            if better {
                best = Some(p);
            }
        }
    }
    match best {
        Some(p) => Ok(ThresholdChoice { tau: p.tau, t_lo: p.t_lo, t_hi: p.t_hi, feasible: true, point: *p }),
        None => {
            let p = curves.points.last().unwrap();
            Ok(ThresholdChoice { tau: p.tau, t_lo: p.t_lo, t_hi: p.t_hi, feasible: false, point: *p })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confident_benign_rules_out() {
        let o = dual_decide(0.01, 0.30, 0.05, 0.95).unwrap();
        assert_eq!(o.decision, Decision::RuleOutBenign);
    }

    #[test]
    fn confident_carcinoma_rules_in() {
        let o = dual_decide(0.80, 0.99, 0.05, 0.95).unwrap();
        assert_eq!(o.decision, Decision::RuleInCarcinoma);
    }

    #[test]
    fn contradiction_stays_equivocal() {
        let o = dual_decide(0.01, 0.99, 0.05, 0.95).unwrap();
        assert_eq!(o.decision, Decision::Equivocal);
    }

    #[test]
    fn out_of_order_thresholds_error() {
        assert!(dual_decide(0.5, 0.5, 0.9, 0.1).is_err());
    }

    #[test]
    fn separable_scores_fully_screen_at_a_loose_tau() {
        let labels = [false, false, true, true];
        let p_sens = [0.05, 0.10, 0.95, 0.99];
        let p_spec = [0.01, 0.02, 0.90, 0.95];
        let curves = threshold_sweep(&p_sens, &p_spec, &labels, &[0.6]).unwrap();
        let p = &curves.points[0];
        assert_eq!(p.screened_total, 1.0);
        assert_eq!(p.total_error_screened, 0.0);
        assert_eq!(p.tpr, 1.0);
        assert_eq!(p.tnr, 1.0);
    }

    #[test]
    fn tau_one_decides_nothing() {
        let labels = [false, true];
        let p_sens = [0.2, 0.9];
        let p_spec = [0.1, 0.8];
        let curves = threshold_sweep(&p_sens, &p_spec, &labels, &[1.0]).unwrap();
        let p = &curves.points[0];
        // t_lo = 0: nothing sits below it; t_hi = 1: nothing sits above it
        assert_eq!(p.screened_total, 0.0);
        assert_eq!(p.fnr, 0.0);
        assert_eq!(p.fpr, 0.0);
    }

    #[test]
    fn default_grid_has_199_points() {
        let grid = default_tau_grid();
        assert_eq!(grid.len(), 199);
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*grid.last().unwrap(), 0.999);
    }

    #[test]
    fn all_feasible_picks_the_least_strict_point() {
        let labels = [false, false, true, true];
        let p_sens = [0.01, 0.02, 0.98, 0.99];
        let p_spec = [0.01, 0.02, 0.98, 0.99];
        let grid = [0.6, 0.7, 0.8];
        let curves = threshold_sweep(&p_sens, &p_spec, &labels, &grid).unwrap();
        let choice = choose_thresholds(&curves, 0.1, 0.1).unwrap();
        assert!(choice.feasible);
        assert_eq!(choice.tau, 0.6);
    }

    #[test]
    fn impossible_constraints_are_flagged() {
        // one misclassified-by-both block makes zero error unattainable at
        // any permissive tau, and stricter taus screen nothing
        let labels = [false, true, true];
        let p_sens = [0.9, 0.95, 0.1];
        let p_spec = [0.9, 0.9, 0.05];
        let grid = [0.55, 0.85];
        let curves = threshold_sweep(&p_sens, &p_spec, &labels, &grid).unwrap();
        let choice = choose_thresholds(&curves, 0.0, 0.0).unwrap();
        assert!(!choice.feasible);
        assert_eq!(choice.tau, 0.85);
    }

    proptest! {
        /// With per-block sensitive scores dominating specific scores (the
        /// regime trained sensitive/specific pairs produce), the sweep is
        /// monotone: stricter tau never screens more and never errs more.
        #[test]
        fn sweep_is_monotone_under_score_dominance(seed in 0u64..400) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(5..=120usize);
            let mut p_sens = Vec::with_capacity(n);
            let mut p_spec = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let a: f64 = rng.gen_range(0.0..1.0);
                let b: f64 = rng.gen_range(0.0..1.0);
                p_sens.push(a.max(b));
                p_spec.push(a.min(b));
                labels.push(rng.gen_bool(0.5));
            }
            let grid = default_tau_grid();
            let curves = threshold_sweep(&p_sens, &p_spec, &labels, &grid).unwrap();
            for w in curves.points.windows(2) {
                prop_assert!(w[1].screened_total <= w[0].screened_total + 1e-12);
                prop_assert!(w[1].fpr <= w[0].fpr + 1e-12);
                prop_assert!(w[1].fnr <= w[0].fnr + 1e-12);
            }
        }

        /// Decisions partition the dataset at every grid point.
        #[test]
        fn decisions_partition_all_blocks(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=60usize);
            let p_sens: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p_spec: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            for tau in [0.505, 0.75, 0.95, 0.999] {
                let (t_lo, t_hi) = (1.0 - tau, tau);
                let mut counts = [0usize; 3];
                for i in 0..n {
                    let o = dual_decide(p_sens[i], p_spec[i], t_lo, t_hi).unwrap();
                    counts[match o.decision {
                        Decision::RuleOutBenign => 0,
                        Decision::RuleInCarcinoma => 1,
                        Decision::Equivocal => 2,
                    }] += 1;
                }
                prop_assert_eq!(counts.iter().sum::<usize>(), n);
            }
        }

        /// A sweep point must agree exactly with re-applying dual_decide
        /// per block.
        #[test]
        fn sweep_matches_per_block_decisions(seed in 0u64..200) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=80usize);
            let p_sens: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p_spec: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            let tau = rng.gen_range(0.5..1.0);
            let curves = threshold_sweep(&p_sens, &p_spec, &labels, &[tau]).unwrap();
            let p = &curves.points[0];

            let mut fn_ = 0usize;
            let mut fp = 0usize;
            let mut decided = 0usize;
            for i in 0..n {
                let o = dual_decide(p_sens[i], p_spec[i], 1.0 - tau, tau).unwrap();
                match o.decision {
                    Decision::RuleOutBenign => {
                        decided += 1;
                        if labels[i] {
                            fn_ += 1;
                        }
                    }
                    Decision::RuleInCarcinoma => {
                        decided += 1;
                        if !labels[i] {
                            fp += 1;
                        }
                    }
                    Decision::Equivocal => {}
                }
            }
            prop_assert_eq!(p.screened_total, decided as f64 / n as f64);
            let n_carc = labels.iter().filter(|&&l| l).count();
            if n_carc > 0 {
                prop_assert_eq!(p.fnr, fn_ as f64 / n_carc as f64);
            }
            if n_carc < n {
                prop_assert_eq!(p.fpr, fp as f64 / (n - n_carc) as f64);
            }
            if decided > 0 {
                prop_assert_eq!(p.total_error_screened, (fn_ + fp) as f64 / decided as f64);
            }
        }
    }
}
