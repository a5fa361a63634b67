//! Episode metrics, traces and the experiment matrix.

mod matrix;
mod metrics;
pub mod suite;
mod trace;

pub use metrics::{
    energy, episode_metrics, f1_score, hold_ratio, trajectory_error, EpisodeMetrics, F1Score, MetricError,
};
pub use matrix::{
    run_matrix, CellMode, CellSummary, Experiment, MatrixError, MatrixReport, MatrixRow, MeanStd, PolicySource, REPORT_HEADER,
};
pub use trace::{EpisodeTrace, HandRecord, PlayedHit, TraceParseError};
