use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// The simulated sequence reached a state the next stage cannot consume.
    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("malformed event log (line {line}): {message}")]
    Format { line: usize, message: String },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("{context}: {path}")]
    Io {
        context: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }
}
