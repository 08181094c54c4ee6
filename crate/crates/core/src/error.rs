use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported order {0}: only orders 1 and 2 are checked algebraically")]
    UnsupportedOrder(u32),

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("no closed-form flow solution for {0}")]
    NoClosedForm(&'static str),

    /// A field evaluation or update produced a non-finite component.
    #[error("divergence at {}: non-finite value in component {component}", stage_label(*stage))]
    Divergence {
        /// Zero-based stage index; `None` for the final update.
        stage: Option<usize>,
        component: usize,
    },

    #[error("degenerate fit: one-step error is exactly zero at h = {h}")]
    DegenerateFit { h: f64 },

    #[error("unbounded step size: ||Hg|| = 0 with nonzero gradient")]
    UnboundedRate,

    #[error("{path}: bad magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated payload ({detail})")]
    Truncated { path: PathBuf, detail: String },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("checksum mismatch for {file}: expected {expected}, got {actual}")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },

    #[error("download failed: {0}")]
    Download(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn stage_label(stage: Option<usize>) -> String {
    match stage {
        Some(i) => format!("stage {}", i + 1),
        None => "update".to_string(),
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Index of the first non-finite entry, if any.
pub(crate) fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}
