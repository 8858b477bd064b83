use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DeconvError>;

/// Errors produced by the deconvolution toolkit.
///
/// The CLI maps these onto its exit-code policy: argument and parse problems
/// are usage errors, `Io` is an I/O failure, and the numerical variants
/// (vanishing denominators, degenerate ratios, non-finite values) signal that
/// a computation could not be carried out on the given data.
#[derive(Debug, Error)]
pub enum DeconvError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("spectrum is not conjugate-symmetric: max imaginary residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    NotConjugateSymmetric { residual: f64, tolerance: f64 },

    #[error("vanishing denominator in {context}")]
    VanishingDenominator { context: &'static str },

    #[error("degenerate fixed-point ratio for {param}: |denominator| = {denominator:.3e}")]
    DegenerateRatio { param: String, denominator: f64 },

    #[error("degenerate data in {context}: {detail}")]
    DegenerateData { context: &'static str, detail: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl DeconvError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DeconvError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        DeconvError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for errors that indicate a numerical failure rather than bad
    /// input or I/O trouble.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DeconvError::NotConjugateSymmetric { .. }
                | DeconvError::VanishingDenominator { .. }
                | DeconvError::DegenerateRatio { .. }
                | DeconvError::DegenerateData { .. }
                | DeconvError::NonFinite(_)
        )
    }
}
