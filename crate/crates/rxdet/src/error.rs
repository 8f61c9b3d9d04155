//! Crate-wide error type.
//!
//! Error kinds map onto the CLI exit-code contract: input errors (bad data
//! files, malformed series), configuration errors (invalid network specs,
//! bad hyper-parameters), and numeric errors (non-finite gradients).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input data: malformed dataset lines, out-of-range values,
    /// degenerate series.
    #[error("input error: {0}")]
    Input(String),

    /// Invalid configuration: network spec invariant violations, bad
    /// hyper-parameters, unknown config keys.
    #[error("configuration error: {0}")]
    Config(String),

    /// Numeric failure during training or inference (non-finite values).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Weights file problems, each kept distinct so callers can tell a
    /// truncated file from a foreign one.
    #[error("weights file error: {0}")]
    Weights(#[from] WeightsError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("bad magic: not a weights file")]
    BadMagic,

    #[error("unsupported format version {0}")]
    BadVersion(u32),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed header: {0}")]
    Header(String),
}

impl Error {
    /// Process exit code for the CLI contract: 1 input, 2 configuration,
    /// 3 internal/numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Io(_) | Error::Weights(_) => 1,
            Error::Config(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}
