use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),

    /// A scenario invariant does not hold. The message names the invariant.
    #[error("invalid scenario: {0}")]
    Invalid(String),

    /// The scenario is valid on its own but cannot be run as configured
    /// (unknown strategy, missing prediction provider, ungrouped line under
    /// group holding, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("event log: {0}")]
    Log(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
