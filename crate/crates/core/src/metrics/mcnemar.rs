//! McNemar's exact test on paired correctness indicators.

use crate::error::{Result, SctError};

/// Exact two-sided binomial test on the discordant pairs, null p = 1/2.
///
/// `correct_a[i]` / `correct_b[i]` state whether each model classified item
/// `i` correctly. With no discordant pairs the test is uninformative and
/// returns 1 by convention.
pub fn mcnemar_exact(correct_a: &[bool], correct_b: &[bool]) -> Result<f64> {
    if correct_a.len() != correct_b.len() {
        return Err(SctError::Input("mcnemar: length mismatch".into()));
    }
    let mut b = 0usize; // A right, B wrong
    let mut c = 0usize; // A wrong, B right
    for (&a, &bb) in correct_a.iter().zip(correct_b) {
        match (a, bb) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(binomial_two_sided(b, c))
}

fn binomial_two_sided(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    // ln-factorial table keeps the tail exact for large n
    let mut ln_fact = vec![0.0f64; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut tail = 0.0;
    for i in 0..=k {
        tail += (ln_fact[n] - ln_fact[i] - ln_fact[n - i] + ln_half_n).exp();
    }
    (2.0 * tail).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_discordance_gives_one() {
        // b = c = 3
        let a = [true, true, true, false, false, false, true, true];
        let b = [false, false, false, true, true, true, true, true];
        assert_eq!(mcnemar_exact(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ten_zero_split_matches_exact_tail() {
        let a = vec![true; 10];
        let b = vec![false; 10];
        let p = mcnemar_exact(&a, &b).unwrap();
        assert!((p - 0.001953125).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn no_discordance_gives_one() {
        let a = [true, false, true];
        let p = mcnemar_exact(&a, &a).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn p_values_stay_in_unit_interval() {
        for b in 0..20usize {
            for c in 0..20usize {
                let p = binomial_two_sided(b, c);
                assert!((0.0..=1.0).contains(&p), "b={b} c={c} p={p}");
            }
        }
    }
}
