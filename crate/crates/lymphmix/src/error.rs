use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto the stable exit-code contract:
/// usage/input problems exit 2, numerical failures exit 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error in {path} row {row}: {msg}")]
    CsvRow {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("invalid data in {path} row {row}: {msg}")]
    Validation {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("unknown model family '{0}' (known: {1})")]
    UnknownFamily(String, String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Exit code for the CLI contract: 2 usage/input, 1 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
