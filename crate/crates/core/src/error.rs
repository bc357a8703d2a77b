use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-physical covariance matrix: {0}")]
    NonPhysical(String),

    #[error("argument outside the function domain: {0}")]
    Domain(String),

    #[error("invalid probability weights: {0}")]
    Weight(String),

    #[error("parameter out of range: {0}")]
    Param(String),

    #[error("invalid evaluation grid: {0}")]
    Grid(String),

    #[error("unknown channel preset `{0}`")]
    UnknownPreset(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate selection: success probability {0:e} underflows")]
    DegenerateSelection(f64),

    #[error("all error-model draws were non-physical ({discarded} of {trials})")]
    AllDrawsNonPhysical { discarded: usize, trials: usize },

    #[error("covariance matrix could not be factorized: {0}")]
    Factorization(String),

    #[error("too few accepted records: {accepted} (need {needed})")]
    TooFewAccepted { accepted: usize, needed: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("record format error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, msg: String },

    #[error("record files disagree: {0}")]
    UnitsMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            line: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn format_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
