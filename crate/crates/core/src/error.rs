//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// File does not conform to one of the binary layouts (bad magic,
    /// version, dtype byte, or trailing garbage).
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    /// Payload shorter or longer than the header promises.
    #[error("length error in {path}: expected {expected} payload bytes, found {found}")]
    Length {
        path: String,
        expected: usize,
        found: usize,
    },

    /// Non-finite values where the data model forbids them.
    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A band with max == min cannot be affinely mapped to [0, 1].
    #[error("band {band} is constant (value {value}); cannot normalize")]
    DegenerateBand { band: usize, value: f64 },

    /// Too few samples (or too few complete pixels) for the requested
    /// estimation problem.
    #[error("rank error: {0}")]
    Rank(String),

    /// A matrix that must be positive definite (or well conditioned) is not.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// A per-pixel recovery system with fewer observations than unknowns,
    /// or one too ill-conditioned to solve.
    #[error("underdetermined recovery: {0}")]
    Underdetermined(String),

    /// An operation invoked on a noise model shape it does not support.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
