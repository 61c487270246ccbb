//! Losses: class-weighted binary cross-entropy for detection and the sum of
//! two categorical cross-entropies for grading.

use crate::blockdata::{DetectionLabel, GradingLabel, Pattern};
use crate::error::{Result, SctError};

pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Weighted binary cross-entropy. `w_benign` scales the loss of benign
/// blocks, `w_carcinoma` that of carcinoma blocks.
pub fn loss_detection(
    p: f64,
    label: DetectionLabel,
    w_benign: f64,
    w_carcinoma: f64,
) -> Result<f64> {
    let p = clamp(p);
    match label {
        DetectionLabel::Benign => Ok(-w_benign * (1.0 - p).ln()),
        DetectionLabel::Carcinoma => Ok(-w_carcinoma * p.ln()),
        DetectionLabel::Unknown => Err(SctError::Data(
            "loss_detection: Unknown label is not trainable".into(),
        )),
    }
}

/// Derivative of the weighted BCE with respect to the pre-sigmoid logit:
/// `w * (p - y)`. Exact for the unclamped loss; the clamp in
/// [`loss_detection`] only guards the logarithm.
pub fn loss_detection_dlogit(
    p: f64,
    label: DetectionLabel,
    w_benign: f64,
    w_carcinoma: f64,
) -> Result<f64> {
    match label {
        DetectionLabel::Benign => Ok(w_benign * p),
        DetectionLabel::Carcinoma => Ok(w_carcinoma * (p - 1.0)),
        DetectionLabel::Unknown => Err(SctError::Data(
            "loss_detection: Unknown label is not trainable".into(),
        )),
    }
}

/// Cross-entropy of both pattern heads, equally weighted.
pub fn loss_grading(
    primary_dist: &[f64],
    secondary_dist: &[f64],
    grading: GradingLabel,
    label: DetectionLabel,
) -> Result<f64> {
    if label == DetectionLabel::Carcinoma && grading.primary == Pattern::None {
        return Err(SctError::Data(
            "loss_grading: carcinoma block carries a pattern of None".into(),
        ));
    }
    if label == DetectionLabel::Unknown {
        return Err(SctError::Data("loss_grading: Unknown label is not trainable".into()));
    }
    let ce = |dist: &[f64], class: usize| -clamp(dist[class]).ln();
    Ok(ce(primary_dist, grading.primary.class_index())
        + ce(secondary_dist, grading.secondary.class_index()))
}

/// Derivatives of [`loss_grading`] with respect to both pre-softmax logit
/// vectors: `p - onehot(y)` per head.
pub fn loss_grading_dlogits(
    primary_dist: &[f64],
    secondary_dist: &[f64],
    grading: GradingLabel,
) -> ([f64; 4], [f64; 4]) {
    let mut dp = [0.0; 4];
    let mut ds = [0.0; 4];
    for c in 0..4 {
        dp[c] = primary_dist[c];
        ds[c] = secondary_dist[c];
    }
    dp[grading.primary.class_index()] -= 1.0;
    ds[grading.secondary.class_index()] -= 1.0;
    (dp, ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prediction_costs_ln_two() {
        for label in [DetectionLabel::Benign, DetectionLabel::Carcinoma] {
            let l = loss_detection(0.5, label, 1.0, 1.0).unwrap();
            assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        assert!(loss_detection(1.0, DetectionLabel::Carcinoma, 1.0, 1.0).unwrap() < 1e-6);
        assert!(loss_detection(0.0, DetectionLabel::Benign, 1.0, 1.0).unwrap() < 1e-6);
    }

    #[test]
    fn carcinoma_weight_scales_the_loss() {
        let l = loss_detection(0.25, DetectionLabel::Carcinoma, 1.0, 2.0).unwrap();
        assert!((l - 2.772589).abs() < 1e-6); // 2 * (-ln 0.25)
    }

    #[test]
    fn unknown_label_is_rejected() {
        assert!(loss_detection(0.5, DetectionLabel::Unknown, 1.0, 1.0).is_err());
    }

    #[test]
    fn uniform_grading_distributions_cost_two_ln_four() {
        let uniform = [0.25; 4];
        let g = GradingLabel { primary: Pattern::P3, secondary: Pattern::P4 };
        let l = loss_grading(&uniform, &uniform, g, DetectionLabel::Carcinoma).unwrap();
        assert!((l - 2.0 * 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_correct_grading_costs_nothing() {
        let mut p1 = [0.0; 4];
        let mut p2 = [0.0; 4];
        p1[Pattern::P4.class_index()] = 1.0;
        p2[Pattern::P3.class_index()] = 1.0;
        let g = GradingLabel { primary: Pattern::P4, secondary: Pattern::P3 };
        let l = loss_grading(&p1, &p2, g, DetectionLabel::Carcinoma).unwrap();
        assert!(l <= 1e-6);
    }

    #[test]
    fn mixed_uniform_and_one_hot_costs_ln_four() {
        let uniform = [0.25; 4];
        let mut p2 = [0.0; 4];
        p2[Pattern::P5.class_index()] = 1.0;
        let g = GradingLabel { primary: Pattern::P3, secondary: Pattern::P5 };
        let l = loss_grading(&uniform, &p2, g, DetectionLabel::Carcinoma).unwrap();
        assert!((l - 4.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn carcinoma_with_none_pattern_is_a_data_error() {
        let uniform = [0.25; 4];
        let g = GradingLabel { primary: Pattern::None, secondary: Pattern::None };
        assert!(loss_grading(&uniform, &uniform, g, DetectionLabel::Carcinoma).is_err());
    }
}
