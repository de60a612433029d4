//! Error types shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NfError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Fewer local maxima than requested; carries what was found.
    #[error("peak shortage: requested {requested}, found {found}: {detail}")]
    PeakShortage {
        requested: usize,
        found: usize,
        detail: String,
    },

    #[error("classification failure: {0}")]
    Classification(String),

    #[error("stage `{stage}` failed: {detail}")]
    Stage { stage: &'static str, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, NfError>;
