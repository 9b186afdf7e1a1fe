use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(betalm_core::Error),
}

impl From<betalm_core::Error> for CliError {
    fn from(e: betalm_core::Error) -> Self {
        match e {
            betalm_core::Error::RankDeficient(what) => CliError::RankDeficient(what),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 for bad data or configuration, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
