//! Evaluation mathematics: classification metrics, the four subgroup tables,
//! and Krippendorff's alpha with bootstrap confidence intervals.

mod classify;
mod kalpha;
mod subgroup;

pub use classify::{classify_metrics, ClassifyMetrics, MetricSet, ScanOutcome};
pub use kalpha::{kalpha, kalpha_bootstrap, BootstrapAlpha, KAlpha, RatingsMatrix};
pub use subgroup::{subgroup_tables, SubgroupReport, SubgroupRow};
