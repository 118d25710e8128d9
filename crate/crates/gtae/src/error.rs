//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(&'static str),

    #[error("missing score entry for subset {subset:?}, task {task}")]
    MissingScore { subset: Vec<usize>, task: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code a CLI run should terminate with when hitting this error.
    /// 1 = usage/input problems, 2 = numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged(_)
            | Error::NotConverged(_)
            | Error::DegenerateNormalization(_)
            | Error::Singular(_) => 2,
            _ => 1,
        }
    }
}
