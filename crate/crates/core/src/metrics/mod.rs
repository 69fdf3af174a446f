//! Evaluation metrics: per-class cell counts and R², instance matching with
//! panoptic/detection/segmentation quality, confusion matrices and
//! percentile bootstrap confidence intervals.

mod bootstrap;
mod confusion;
mod counts;
mod matching;
mod report;

pub use bootstrap::{bootstrap_ci, percentile, Interval, DEFAULT_REPLICATES};
pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use counts::{count_cells, r_squared, CountVector};
pub use matching::{
    dataset_pq, match_instances, pq_sq_dq, ClassMatch, LabeledInstances, MatchResult, MatchedPair, PqScores,
    DEFAULT_IOU_THRESHOLD,
};
pub use report::{
    evaluate, Averages, ClassMetrics, EvalImage, EvaluateOptions, MetricReport, MetricValue, REPORT_SCHEMA,
    REPORT_SCHEMA_VERSION,
};
