use thiserror::Error;

use crate::net::NetParams;

/// Errors produced by the mapping pipeline.
///
/// The variant name is what the CLI reports on failure, so each maps to one
/// failure class rather than to one call site.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown class id {0}")]
    UnknownClass(u32),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("state error: {0}")]
    State(String),
    #[error("training diverged at step {step}: {reason}")]
    Divergence {
        step: usize,
        reason: String,
        /// Parameters before the diverging update.
        last_good: Option<Box<NetParams<f32>>>,
    },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short name used in structured CLI error output.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Format(_) => "FormatError",
            Error::Shape(_) => "ShapeError",
            Error::Config(_) => "ConfigError",
            Error::UnknownClass(_) => "UnknownClassError",
            Error::Alignment(_) => "AlignmentError",
            Error::State(_) => "StateError",
            Error::Divergence { .. } => "DivergenceError",
            Error::EmptyMatrix => "EmptyMatrixError",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
