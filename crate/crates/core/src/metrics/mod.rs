//! Evaluation: confusion-based overlap scores, ROC AUC, centerline Dice,
//! paired t-tests and fold aggregation.

mod auc;
mod confusion;
mod report;
mod skeleton;
mod stats;

pub use auc::auc;
pub use confusion::{confusion_counts, scalar_metrics, ClassCounts, ConfusionCounts, ScalarMetrics};
pub use report::{evaluate_image, EvalReport, MetricsReport, VesselReport, ViewReport};
pub use skeleton::{cl_dice, skeletonize, BinaryMask};
pub use stats::{aggregate_folds, mean_std, paired_t_test, MeanStd, TTest};
