//! ISUP grade groups from Gleason pattern pairs, and the derived
//! probability of grade group 3 or higher.

use crate::blockdata::Pattern;
use crate::error::{Result, SctError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GradeGroup {
    Benign,
    GG1,
    GG2,
    GG3,
    GG4,
    GG5,
}

impl GradeGroup {
    /// Ordinal index 0..=5 for kappa computations.
    pub fn ordinal(self) -> usize {
        match self {
            GradeGroup::Benign => 0,
            GradeGroup::GG1 => 1,
            GradeGroup::GG2 => 2,
            GradeGroup::GG3 => 3,
            GradeGroup::GG4 => 4,
            GradeGroup::GG5 => 5,
        }
    }
}

/// 2014 ISUP consensus mapping of (primary, secondary) pattern pairs.
pub fn isup_group(primary: Pattern, secondary: Pattern) -> Result<GradeGroup> {
    use Pattern::*;
    match (primary, secondary) {
        (None, None) => Ok(GradeGroup::Benign),
        (None, _) | (_, None) => Err(SctError::Input(
            "isup_group: mixed None and pattern is not a valid pair".into(),
        )),
        (P3, P3) => Ok(GradeGroup::GG1),
        (P3, P4) => Ok(GradeGroup::GG2),
        (P4, P3) => Ok(GradeGroup::GG3),
        (p, s) => {
            let sum = pattern_value(p) + pattern_value(s);
            if sum == 8 {
                Ok(GradeGroup::GG4)
            } else {
                Ok(GradeGroup::GG5)
            }
        }
    }
}

fn pattern_value(p: Pattern) -> u8 {
    match p {
        Pattern::None => 0,
        Pattern::P3 => 3,
        Pattern::P4 => 4,
        Pattern::P5 => 5,
    }
}

/// Probability of grade group 3+ from two independent pattern heads:
/// the mass of pattern pairs mapping to GG3..GG5, renormalized over all
/// carcinoma pairs. Distributions are over {None, 3, 4, 5}.
pub fn gg3plus_score(primary_dist: &[f64], secondary_dist: &[f64]) -> f64 {
    let patterns = [Pattern::P3, Pattern::P4, Pattern::P5];
    let mut high = 0.0;
    let mut total = 0.0;
    for &a in &patterns {
        for &b in &patterns {
            let mass = primary_dist[a.class_index()] * secondary_dist[b.class_index()];
            total += mass;
            if isup_group(a, b).expect("valid pair") >= GradeGroup::GG3 {
                high += mass;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Pattern::*;

    #[test]
    fn all_ten_valid_pairs() {
        let cases = [
            ((None, None), GradeGroup::Benign),
            ((P3, P3), GradeGroup::GG1),
            ((P3, P4), GradeGroup::GG2),
            ((P4, P3), GradeGroup::GG3),
            ((P4, P4), GradeGroup::GG4),
            ((P3, P5), GradeGroup::GG4),
            ((P5, P3), GradeGroup::GG4),
            ((P4, P5), GradeGroup::GG5),
            ((P5, P4), GradeGroup::GG5),
            ((P5, P5), GradeGroup::GG5),
        ];
        for ((p, s), want) in cases {
            assert_eq!(isup_group(p, s).unwrap(), want, "{p:?}+{s:?}");
        }
    }

    #[test]
    fn mixed_none_is_an_input_error() {
        assert!(isup_group(None, P4).is_err());
        assert!(isup_group(P3, None).is_err());
    }

    #[test]
    fn deterministic_pairs_score_zero_or_one() {
        let mut p4 = [0.0; 4];
        p4[P4.class_index()] = 1.0;
        let mut p3 = [0.0; 4];
        p3[P3.class_index()] = 1.0;
        assert_eq!(gg3plus_score(&p4, &p3), 1.0); // 4+3 -> GG3
        assert_eq!(gg3plus_score(&p3, &p3), 0.0); // 3+3 -> GG1
    }

    #[test]
    fn uniform_heads_score_seven_ninths() {
        let uniform = [0.25; 4];
        assert!((gg3plus_score(&uniform, &uniform) - 7.0 / 9.0).abs() < 1e-15);
        // uniform over the three carcinoma patterns only
        let thirds = [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        assert!((gg3plus_score(&thirds, &thirds) - 7.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn all_mass_on_none_scores_zero() {
        let none = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(gg3plus_score(&none, &none), 0.0);
    }
}
