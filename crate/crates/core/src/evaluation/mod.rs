//! Multi-label metrics, cross-validation, significance testing and reports.

mod cv;
mod folds;
mod metrics;
mod report;
mod ttest;

pub use cv::{cross_validate, Aggregation, ExperimentResult, Fitter, FoldResult, Learner, ModelFitter, Predictor};
pub use folds::{make_folds, make_folds_with, FoldMode, FoldPlan};
pub use metrics::{f_beta, hamming_loss, micro_confusion, micro_f1, ConfusionTotals};
pub use report::{markdown_table, write_csv, CellOutcome, CSV_COLUMNS};
pub use ttest::{critical_t, paired_t_test, TTest, CONFIDENCE_LEVELS};
