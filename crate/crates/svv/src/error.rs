//! Crate-wide error type.
//!
//! Three failure classes matter operationally and map to distinct process
//! exit codes: configuration rejection (exit 2), numerical abort during
//! time stepping (exit 3), and everything else (generic failure). Variants
//! carry enough context to print a useful one-line diagnosis.

use std::path::PathBuf;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// Invalid configuration. Collects every violation found, not just the
    /// first, so one round trip fixes them all.
    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    /// A field or file failed a structural precondition (reality symmetry
    /// broken, mismatched lattices, malformed snapshot, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Time stepping produced a non-finite coefficient or an iteration
    /// failed to converge. Carries the last valid state so callers can dump
    /// it for post-mortem inspection.
    #[error("numerical abort at step {step} (t = {time}): {detail}")]
    Abort {
        step: u64,
        time: f64,
        detail: String,
        /// Snapshot file written by the caller, if any.
        dump: Option<PathBuf>,
    },

    /// An experiment-level failure: too many ensemble members aborted, a
    /// reference run failed, or similar.
    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Single-violation configuration error.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
