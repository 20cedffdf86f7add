//! Crate-wide error type.
//!
//! Variants map onto the failure classes the rest of the crate distinguishes:
//! shape mismatches, API contract violations, configuration problems, numeric
//! faults during training, barrier violations, and schedule-audit failures.

use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible. The message names both shapes.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// An API precondition was violated (bad action id, step after terminal,
    /// non-scalar backward root, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value or file.
    #[error("config error: {0}")]
    Config(String),

    /// Numeric fault during training (non-finite gradient or loss).
    #[error("numeric fault: {0}")]
    Fault(String),

    /// Non-finite loss with the offending batch dumped for inspection.
    #[error("numeric fault: non-finite loss at update {update_idx}; batch dumped to {dump_path}")]
    FaultWithDump { update_idx: u64, dump_path: PathBuf },

    /// A shared update was attempted without all workers' rollout segments.
    #[error("barrier violation: {0}")]
    Barrier(String),

    /// Empirical flip fractions deviate from the schedule.
    #[error("schedule audit failed: {0}")]
    Audit(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// File parse failure (config TOML, metrics CSV).
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for usage/config/parse problems,
    /// 1 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::Io(_) => 2,
            _ => 1,
        }
    }
}
