//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A row in an input file could not be parsed.
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        message: String,
    },

    /// A row references a cell or cycle that does not exist.
    #[error("{}:{line}: {message}", file.display())]
    Referential {
        file: PathBuf,
        line: u64,
        message: String,
    },

    /// The cell never fell below the end-of-life threshold.
    #[error("cell `{cell_id}` is censored: capacity never fell below {threshold_ah} Ah")]
    Censored { cell_id: String, threshold_ah: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cell `{cell_id}` has {available} cycles, {requested} requested")]
    Truncation {
        cell_id: String,
        requested: u32,
        available: usize,
    },

    #[error("curve quality: {0}")]
    CurveQuality(String),

    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("peak detection failed: {0}")]
    PeakDetection(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// A feature computation failed; `feature` names the column.
    #[error("feature `{feature}`: {source}")]
    Feature {
        feature: String,
        #[source]
        source: Box<Error>,
    },

    /// Failures from several cells, reported together.
    #[error("{} cell(s) failed: {}", .0.len(), summarize(.0))]
    Cells(Vec<(String, Error)>),

    #[error("duplicate cell id `{0}`")]
    DuplicateCell(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Coordinate descent hit the iteration cap; the last iterate is kept.
    #[error(
        "no convergence after {iterations} iterations (max coefficient change {last_change:e})"
    )]
    Convergence {
        iterations: usize,
        last_change: f64,
        coefficients: Vec<f64>,
        intercept: f64,
    },

    #[error("degenerate weights: {0}")]
    DegenerateWeight(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Cells listed in full before the rest are only counted.
const SUMMARY_LIMIT: usize = 5;

fn summarize(errors: &[(String, Error)]) -> String {
    let mut s = errors
        .iter()
        .take(SUMMARY_LIMIT)
        .map(|(id, e)| format!("[{id}] {e}"))
        .collect::<Vec<_>>()
        .join("; ");
    if errors.len() > SUMMARY_LIMIT {
        s.push_str(&format!("; and {} more", errors.len() - SUMMARY_LIMIT));
    }
    s
}

impl Error {
    pub(crate) fn in_feature(self, feature: &str) -> Self {
        Error::Feature {
            feature: feature.to_string(),
            source: Box::new(self),
        }
    }
}
