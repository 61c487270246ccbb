//! Evaluation statistics: ROC/AUC, operating points, quadratically weighted
//! kappa with bootstrap confidence intervals, DeLong tests, McNemar's exact
//! test, and the ISUP grade-group mapping.

mod delong;
mod grading;
mod kappa;
mod mcnemar;
mod roc;

pub use delong::{delong_paired, delong_unpaired, DelongPaired, DelongUnpaired};
pub use grading::{gg3plus_score, isup_group, GradeGroup};
pub use kappa::{quadratic_kappa, quadratic_kappa_seeded, KappaResult, DEFAULT_BOOTSTRAP_SEED};
pub use mcnemar::mcnemar_exact;
pub use roc::{confusion_at, roc_auc, Confusion, RocPoint, RocResult};
