use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the segmentation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("log-sum-exp over an empty set")]
    EmptyReduction,

    #[error("invalid label set: {0}")]
    InvalidLabels(String),

    #[error("operation requires a null label but the label set has none")]
    MissingNullLabel,

    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("span ({start}, {end}) is outside a sequence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },

    #[error("span ({start}, {end}) is wider than the maximum width {max_width}")]
    SpanTooWide {
        start: usize,
        end: usize,
        max_width: usize,
    },

    #[error("segmentation does not cover the sequence contiguously")]
    InvalidSegmentation,

    #[error("segments ({0}, {1}) and ({2}, {3}) overlap")]
    Overlap(usize, usize, usize, usize),

    #[error("duplicate span ({start}, {end}) in graph nodes")]
    DuplicateSpan { start: usize, end: usize },

    #[error("path is not a start-to-end path of the graph: {0}")]
    PathNotInGraph(String),

    #[error("enumeration budget of {budget} items exceeded")]
    BudgetExceeded { budget: usize },

    #[error("shape mismatch for `{array}`: expected {expected:?} ({} values), got {actual} values", expected.iter().product::<usize>())]
    ShapeMismatch {
        array: &'static str,
        expected: Vec<usize>,
        actual: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown backend `{0}` (expected crf, semicrf, semicrf-unitnull or fsemicrf)")]
    UnknownBackend(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
