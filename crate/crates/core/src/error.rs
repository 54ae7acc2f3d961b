//! Error type shared by every stage of the estimation pipeline.

use std::path::PathBuf;

use thiserror::Error;

use crate::aids::FitResult;

pub type Result<T> = std::result::Result<T, AidsError>;

/// Coarse classification used by the command-line front-end to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input files, malformed CSV, I/O failures.
    Data,
    /// Inconsistent model or restriction settings.
    Specification,
    /// Singular matrices, non-convergence, degenerate shares.
    Numerical,
}

#[derive(Debug, Error)]
pub enum AidsError {
    #[error("format error: {0}")]
    Format(String),

    #[error("data error at {location}: {message}")]
    Data { location: String, message: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("specification error: {0}")]
    Specification(String),

    #[error("numerical error: {message} (condition number {condition:.3e})")]
    Numerical { message: String, condition: f64 },

    #[error("identification error: {0}")]
    Identification(String),

    #[error("weighting loop did not converge after {iterations} iterations (last change {last_delta:.3e})")]
    NotConverged {
        iterations: usize,
        last_delta: f64,
        trace: Vec<f64>,
    },

    #[error("iterated estimation did not converge after {} iterations (last change {:.3e})", .trace.len(), .trace.last().copied().unwrap_or(f64::NAN))]
    IlleNotConverged {
        trace: Vec<f64>,
        partial: Box<FitResult>,
    },

    #[error("degenerate share {share:.3e} for good {good}")]
    DegenerateShare { good: usize, share: f64 },

    #[error("R-squared undefined for good {good}: observed {series} series has zero variance")]
    UndefinedRSquared { good: usize, series: &'static str },

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<AidsError>,
    },
}

impl AidsError {
    pub(crate) fn dimension(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        AidsError::Dimension {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn data(location: impl Into<String>, message: impl Into<String>) -> Self {
        AidsError::Data {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AidsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        AidsError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            AidsError::Format(_)
            | AidsError::Data { .. }
            | AidsError::InsufficientData(_)
            | AidsError::Io { .. }
            | AidsError::Csv(_)
            | AidsError::Json(_) => ErrorKind::Data,
            AidsError::Specification(_) | AidsError::Dimension { .. } => ErrorKind::Specification,
            AidsError::Numerical { .. }
            | AidsError::Identification(_)
            | AidsError::NotConverged { .. }
            | AidsError::IlleNotConverged { .. }
            | AidsError::DegenerateShare { .. }
            | AidsError::UndefinedRSquared { .. }
            | AidsError::Generation(_) => ErrorKind::Numerical,
            AidsError::Context { source, .. } => source.kind(),
        }
    }

    /// Strips any [`AidsError::Context`] layers.
    pub fn root(&self) -> &AidsError {
        match self {
            AidsError::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
