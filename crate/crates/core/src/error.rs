//! Error type shared by every module, with a stable mapping to process exit
//! codes for the CLI and the C ABI.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Variants group into four families that map onto exit codes:
/// usage problems (`1`), malformed data or violated call contracts (`2`),
/// and numeric breakdowns such as divergence or undefined metrics (`3`).
/// Success is `0`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Command line or configuration problem: unknown flag values, missing
    /// or unparseable config files, contradictory settings.
    #[error("usage: {0}")]
    Usage(String),

    /// A referenced file could not be read or written.
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input data violates the declared schema or value constraints
    /// (wrong column count, unparseable number, NaN in a feature, ...).
    #[error("data: {0}")]
    Data(String),

    /// An API was called with arguments that violate its contract
    /// (k = 0, empty dataset, mismatched dimensions, stale cache, ...).
    #[error("contract: {0}")]
    Contract(String),

    /// Numeric breakdown: a metric is undefined for the given partition, an
    /// iteration diverged, or a computation produced non-finite values.
    #[error("numeric: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code for this error, used by the CLI and the C ABI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io { .. } => 1,
            Error::Data(_) | Error::Contract(_) => 2,
            Error::Numeric(_) => 3,
        }
    }

    /// Convenience constructor for I/O errors that records the offending path.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
