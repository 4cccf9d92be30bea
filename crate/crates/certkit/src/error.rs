//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

/// Errors reported by certification and evaluation routines.
///
/// Validation-style variants (`DimensionMismatch`, `InvalidDistribution`,
/// `Domain`, `InvalidInput`) mean the inputs were malformed; `Capability`
/// means the inputs were fine but the requested configuration has no
/// supported evaluation path.
#[derive(Debug, Error)]
pub enum CertError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported configuration: {0}")]
    Capability(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CertError {
    /// True when the error signals an unsupported configuration rather
    /// than malformed input.
    pub fn is_capability(&self) -> bool {
        matches!(self, CertError::Capability(_))
    }
}

pub type Result<T> = std::result::Result<T, CertError>;
