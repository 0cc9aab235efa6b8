use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `key` names the offending setting.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A caller broke an operation's precondition (shape or dimension mismatch).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("repertoire is empty; it must be initialized before sampling")]
    EmptyRepertoire,

    /// A snapshot could not be decoded. `cell` is the index of the first failing cell, if any.
    #[error("malformed snapshot{}: {reason}", match .cell { Some(c) => format!(" at cell {c}"), None => String::new() })]
    Snapshot { cell: Option<usize>, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unsupported export: {0}")]
    UnsupportedExport(String),

    /// A run aborted after an invariant breach.
    #[error("run aborted at iteration {iteration}: {reason}")]
    RunAborted { iteration: usize, reason: String },

    #[error("output path {0} already exists and is not empty")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn snapshot(cell: Option<usize>, reason: impl Into<String>) -> Self {
        Error::Snapshot {
            cell,
            reason: reason.into(),
        }
    }
}
