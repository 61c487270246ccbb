//! CSV report emission: evaluation summaries, screening sweep curves, and
//! companion plot-data files (labeled x,y series for external plotting).

use crate::error::Result;
use crate::metrics::{Confusion, KappaResult, RocPoint};
use crate::screening::SweepCurves;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Six significant digits; integers keep their own columns.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0.000000".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-6..=15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

/// `r.csv` gets its plot data next to it as `r.plot.csv`.
pub fn plot_companion_path(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => path.with_extension(format!("plot.{ext}")),
        None => path.with_extension("plot.csv"),
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonStats {
    pub auc_other: f64,
    pub delong_z: f64,
    pub delong_p: f64,
    pub mcnemar_p: f64,
}

#[derive(Debug, Clone)]
pub struct DetectionEval {
    pub n_blocks: usize,
    pub threshold: f64,
    pub auc: f64,
    pub confusion: Confusion,
    pub roc_points: Vec<RocPoint>,
    pub comparison: Option<ComparisonStats>,
}

#[derive(Debug, Clone)]
pub struct GradingEval {
    pub n_blocks: usize,
    pub kappa_isup: KappaResult,
    pub kappa_primary: KappaResult,
    pub kappa_secondary: KappaResult,
    pub gg3plus_auc: Option<f64>,
    /// (grade-group label, support, correct predictions)
    pub per_group: Vec<(String, usize, usize)>,
}

#[derive(Debug, Clone)]
pub enum EvalReport {
    Detection(DetectionEval),
    Grading(GradingEval),
}

/// Write an evaluation report: one summary row, then per-class rows.
/// Detection reports also get a ROC plot companion.
pub fn emit_eval_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    match report {
        EvalReport::Detection(d) => {
            writeln!(
                f,
                "row,label,count,correct,rate,auc,sensitivity,specificity,tp,fp,tn,fn,threshold"
            )?;
            let c = &d.confusion;
            writeln!(
                f,
                "summary,all,{},{},{},{},{},{},{},{},{},{},{}",
                d.n_blocks,
                c.tp + c.tn,
                fmt_sig((c.tp + c.tn) as f64 / d.n_blocks as f64),
                fmt_sig(d.auc),
                fmt_sig(c.sensitivity),
                fmt_sig(c.specificity),
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                fmt_sig(d.threshold)
            )?;
            let n_benign = c.tn + c.fp;
            let n_carcinoma = c.tp + c.fn_;
            writeln!(
                f,
                "class,benign,{},{},{},,,,,,,,",
                n_benign,
                c.tn,
                fmt_sig(c.specificity)
            )?;
            writeln!(
                f,
                "class,carcinoma,{},{},{},,,,,,,,",
                n_carcinoma,
                c.tp,
                fmt_sig(c.sensitivity)
            )?;
            if let Some(cmp) = &d.comparison {
                writeln!(
                    f,
                    "comparison,other-model,,,,{},,,,,,,{}",
                    fmt_sig(cmp.auc_other),
                    ""
                )?;
                writeln!(
                    f,
                    "statistic,delong-z,,,,{},,,,,,,",
                    fmt_sig(cmp.delong_z)
                )?;
                writeln!(f, "statistic,delong-p,,,,{},,,,,,,", fmt_sig(cmp.delong_p))?;
                writeln!(f, "statistic,mcnemar-p,,,,{},,,,,,,", fmt_sig(cmp.mcnemar_p))?;
            }
            // companion: ROC curve
            let mut pf = std::fs::File::create(plot_companion_path(path))?;
            writeln!(pf, "series,x,y")?;
            for p in &d.roc_points {
                writeln!(
                    pf,
                    "roc,{},{}",
                    fmt_sig(1.0 - p.specificity),
                    fmt_sig(p.sensitivity)
                )?;
            }
        }
        EvalReport::Grading(g) => {
            writeln!(f, "row,label,count,correct,rate,kappa,ci_low,ci_high,gg3plus_auc")?;
            let correct: usize = g.per_group.iter().map(|&(_, _, c)| c).sum();
            writeln!(
                f,
                "summary,isup,{},{},{},{},{},{},{}",
                g.n_blocks,
                correct,
                fmt_sig(correct as f64 / g.n_blocks as f64),
                fmt_sig(g.kappa_isup.kappa),
                fmt_sig(g.kappa_isup.ci_low),
                fmt_sig(g.kappa_isup.ci_high),
                g.gg3plus_auc.map(fmt_sig).unwrap_or_default()
            )?;
            writeln!(
                f,
                "summary,primary-pattern,,,,{},{},{},",
                fmt_sig(g.kappa_primary.kappa),
                fmt_sig(g.kappa_primary.ci_low),
                fmt_sig(g.kappa_primary.ci_high)
            )?;
            writeln!(
                f,
                "summary,secondary-pattern,,,,{},{},{},",
                fmt_sig(g.kappa_secondary.kappa),
                fmt_sig(g.kappa_secondary.ci_low),
                fmt_sig(g.kappa_secondary.ci_high)
            )?;
            for (label, support, correct) in &g.per_group {
                let rate = if *support == 0 {
                    String::new()
                } else {
                    fmt_sig(*correct as f64 / *support as f64)
                };
                writeln!(f, "class,{label},{support},{correct},{rate},,,,")?;
            }
        }
    }
    Ok(())
}

/// One row per grid point, plus a plot companion with the named series.
pub fn emit_sweep_csv(curves: &SweepCurves, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        "tau,t_lo,t_hi,tpr,fpr,tnr,fnr,screened_benign,screened_carcinoma,screened_total,\
         total_error_screened,total_error_all"
    )?;
    for p in &curves.points {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_sig(p.tau),
            fmt_sig(p.t_lo),
            fmt_sig(p.t_hi),
            fmt_sig(p.tpr),
            fmt_sig(p.fpr),
            fmt_sig(p.tnr),
            fmt_sig(p.fnr),
            fmt_sig(p.screened_benign),
            fmt_sig(p.screened_carcinoma),
            fmt_sig(p.screened_total),
            fmt_sig(p.total_error_screened),
            fmt_sig(p.total_error_all)
        )?;
    }
    let mut pf = std::fs::File::create(plot_companion_path(path))?;
    writeln!(pf, "series,x,y")?;
    for p in &curves.points {
        for (series, y) in [
            ("tpr", p.tpr),
            ("fpr", p.fpr),
            ("tnr", p.tnr),
            ("fnr", p.fnr),
            ("screened_benign", p.screened_benign),
            ("screened_carcinoma", p.screened_carcinoma),
            ("screened_total", p.screened_total),
            ("total_error_screened", p.total_error_screened),
        ] {
            writeln!(pf, "{series},{},{}", fmt_sig(p.tau), fmt_sig(y))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::confusion_at;
    use crate::screening::{threshold_sweep, default_tau_grid};

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(0.95), "0.950000");
        assert_eq!(fmt_sig(0.9776119402985075), "0.977612");
        assert_eq!(fmt_sig(0.0), "0.000000");
        assert_eq!(fmt_sig(1234.5678), "1234.57");
        assert_eq!(fmt_sig(0.5333333333), "0.533333");
        assert_eq!(fmt_sig(-0.00123456), "-0.00123456");
    }

    #[test]
    fn table_style_counts_round_to_the_published_rates() {
        // 209 TP, 11 FN, 655 TN, 15 FP
        let mut scores = vec![0.9; 209];
        let mut labels = vec![true; 209];
        scores.extend(vec![0.1; 11]);
        labels.extend(vec![true; 11]);
        scores.extend(vec![0.1; 655]);
        labels.extend(vec![false; 655]);
        scores.extend(vec![0.9; 15]);
        labels.extend(vec![false; 15]);
        let confusion = confusion_at(&scores, &labels, 0.5);
        let report = EvalReport::Detection(DetectionEval {
            n_blocks: scores.len(),
            threshold: 0.5,
            auc: crate::metrics::roc_auc(&scores, &labels).unwrap().auc,
            confusion,
            roc_points: vec![],
            comparison: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        emit_eval_report(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let summary = text.lines().nth(1).unwrap();
        assert!(summary.contains("0.950000"), "summary: {summary}");
        assert!(summary.contains("0.977612"), "summary: {summary}");
    }

    #[test]
    fn sweep_csv_has_header_plus_one_row_per_point() {
        let labels = [false, false, true, true];
        let p_sens = [0.05, 0.2, 0.9, 0.95];
        let p_spec = [0.02, 0.1, 0.85, 0.9];
        let grid = default_tau_grid();
        let curves = threshold_sweep(&p_sens, &p_spec, &labels, &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        emit_sweep_csv(&curves, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 200); // header + 199 points
        assert!(plot_companion_path(&path).exists());
    }

    #[test]
    fn empty_curves_give_a_header_only_csv() {
        let curves = SweepCurves { points: vec![], n_benign: 0, n_carcinoma: 0 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_sweep_csv(&curves, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
