//! Error taxonomy shared by the library and the command-line harness.
//!
//! The split mirrors the process exit codes: configuration and input
//! validation problems map to exit 1, solver failures to exit 2, and
//! threshold breaches detected by verification commands to exit 3.

use std::fmt;

/// Everything that can go wrong below the CLI layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration key is missing, malformed, or out of range.
    /// `key` names the offending entry so messages stay actionable.
    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// An operation's precondition was violated (incompatible data,
    /// nonzero-mean forcing on the torus, bad grid size, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The Krylov loop ran out of iterations before reaching tolerance.
    #[error(
        "solver stalled in {context}: relative residual {residual:.3e} \
         after {iterations} iterations (target {tolerance:.1e})"
    )]
    NonConvergence {
        context: String,
        residual: f64,
        iterations: usize,
        tolerance: f64,
    },

    /// A cache or solution file failed structural validation. Callers
    /// reading caches treat this as a miss, never as corrupted data.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl fmt::Display) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.to_string(),
        }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
