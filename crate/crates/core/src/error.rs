use thiserror::Error;

/// Errors raised by data validation, estimation and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: entry {value} appears more than once")]
    DuplicateEntry { row: usize, value: u32 },

    #[error("row {row}: entry {value} is outside 1..={k}")]
    EntryOutOfRange { row: usize, value: u32, k: usize },

    #[error("row {row}: ranked items do not form a prefix (zero followed by a nonzero entry)")]
    NonPrefix { row: usize },

    #[error("row {row}: nonzero ranks do not form a contiguous set 1..t")]
    RankGap { row: usize },

    #[error("row {row}: no item is ranked")]
    EmptyRow { row: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite log-posterior at EM iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("degenerate Gamma full conditional (shape {shape}, rate {rate}) for component {component}, item {item}")]
    DegenerateConditional {
        component: usize,
        item: usize,
        shape: f64,
        rate: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            Error::Numerical(_)
            | Error::NonFiniteObjective { .. }
            | Error::DegenerateConditional { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
