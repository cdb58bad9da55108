//! Combinatorial accounting and training-run reporting.
//!
//! `space` evaluates the ordered and exchangeable observation-space
//! sizes exactly; `metrics` serializes per-iteration training records
//! as CSV; `summary` compares finished runs against a return threshold.

mod metrics;
mod space;
mod summary;

pub use metrics::{parse_metrics, read_metrics, write_metrics, MetricRecord, METRIC_HEADER};
pub use space::{reduction_factor, space_sizes, SpaceSizeReport};
pub use summary::{render_summary_csv, render_summary_text, summarize_runs, RunSummary};

/// Failures from analysis operations.
#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Domain(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}
