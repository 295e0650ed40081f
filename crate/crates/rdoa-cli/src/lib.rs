//! Config-driven Monte-Carlo experiment runner for the robust sparse DOA
//! estimator, plus single-shot estimation on stored snapshot files.
//!
//! The binary exposes three subcommands: `simulate <config>` runs an RMSE
//! sweep and writes a CSV, `crb <config>` tabulates the corresponding
//! Cramér-Rao bounds, and `estimate <file>` runs the estimator once on a
//! snapshot file. Exit codes: 0 success, 2 configuration error, 3 numerical
//! failure.

// validation guards are written `!(x > 0.0)` so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;

use std::fmt;

/// CLI-level error, split by exit code: configuration problems (bad config
/// file, bad arguments, unreadable input) exit with 2, numerical failures
/// inside the estimator or bound evaluation exit with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<rdoa_core::Error> for CliError {
    fn from(e: rdoa_core::Error) -> Self {
        use rdoa_core::Error as E;
        match e {
            E::NotPositiveDefinite { .. }
            | E::Singular { .. }
            | E::TylerDomain(_)
            | E::TylerQuadForm { .. }
            | E::AllZeroGamma => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
