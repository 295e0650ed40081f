//! Crate-wide error type.

/// Errors raised by geometry, data generation, estimation and metric routines.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("angle {0} deg lies outside [-90, 90]")]
    AngleOutOfRange(f64),

    #[error("dictionary needs at least 2 grid points, got {0}")]
    GridTooSmall(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("source count {k} must be at least 1 and below the sensor count {n}")]
    SourceCount { k: usize, n: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    #[error("Tyler loss undefined at t = {0}; quadratic form must be positive")]
    TylerDomain(f64),

    #[error("Tyler weights undefined: quadratic form {value} at snapshot {snapshot} is not positive")]
    TylerQuadForm { snapshot: usize, value: f64 },

    #[error("all gamma entries are zero; cannot prune")]
    AllZeroGamma,

    #[error("accumulator is empty")]
    EmptyAccumulator,

    #[error("quantile probability {0} lies outside (0, 1)")]
    QuantileOutOfRange(f64),

    #[error("snapshot file: bad magic at offset 0 (expected \"RDOA\")")]
    BadMagic,

    #[error("snapshot file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("snapshot file: invalid dimensions N={n}, L={l} at offset 4")]
    BadDimensions { n: u32, l: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
