//! Benchmark harness: datasets, ranking metrics, the TF-IDF baseline, run
//! aggregation and overlap analysis.

mod dataset;
mod metrics;
mod overlap;
mod report;
mod vsm;

use thiserror::Error;

pub use dataset::{
    ingest_benchmark_table, load_dataset, save_dataset, split_chronological, BugReport, DEFAULT_TRAIN_FRACTION,
};
pub use metrics::{
    accuracy_at_k, average_precision, first_hit_rank, map_at_k, mrr_at_k, GroundTruths, LocalizationResult,
};
pub use overlap::{overlap_analysis, OverlapCounts};
pub use report::{aggregate_runs, render_overlap_table, render_table, Coverage, EvalReport, REPORT_SCHEMA_VERSION};
pub use vsm::{vsm_rank, VsmModel, VsmRanking};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric is undefined over an empty result set")]
    EmptyResults,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no ground truth for bug {0}")]
    MissingGroundTruth(String),
    #[error("empty ground truth for bug {0}")]
    EmptyGroundTruth(String),
    #[error("runs cover different bug sets")]
    MismatchedBugSets,
    #[error("overlap analysis needs at least two techniques, got {0}")]
    TooFewTechniques(usize),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("duplicate bug id {0}")]
    DuplicateBugId(String),
    #[error("bug {0} has no report_time")]
    MissingTimestamp(String),
    #[error("train fraction {0} is outside [0, 1]")]
    BadFraction(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
}
