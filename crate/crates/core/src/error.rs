use thiserror::Error;

/// Errors produced by the splitcheck library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed or inconsistent input data (ragged rows, missing cells,
    /// bad group column, mismatched shapes).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A contingency table collapsed to a single row or column after
    /// pruning zero marginals; callers treat this as "no information".
    #[error("degenerate contingency table: {0}")]
    DegenerateTable(String),

    /// Internal numerical failure (non-convergence, inconsistency).
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
