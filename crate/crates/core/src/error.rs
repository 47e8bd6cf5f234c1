use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module in this crate.
///
/// The split between variants matters to callers: configuration and data
/// validation problems are recoverable user errors, while `NonFinite` means
/// the numerics themselves broke down at runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its content is malformed. `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// An argument fell outside the domain an operation is defined on.
    #[error("{0}")]
    Domain(String),

    /// All raw MOS values are equal, so min-max normalization is undefined.
    #[error("degenerate MOS range: every raw value equals {value}")]
    DegenerateMosRange { value: f64 },

    /// The decision threshold must sit strictly inside the normalized range
    /// for the asymmetry factor to be positive and finite.
    #[error("threshold {threshold} does not lie strictly inside the normalized range [{min}, {max}]")]
    DegenerateThreshold { threshold: f64, min: f64, max: f64 },

    #[error("initial curriculum stage (level {level}) contains no samples")]
    EmptyInitialStage { level: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A NaN or infinity showed up where the math requires finite values.
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    /// True for errors that indicate a runtime numerical failure rather than
    /// bad configuration or bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
