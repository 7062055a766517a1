use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("conv1d: input length {len} is shorter than kernel width {kernel}")]
    ConvTooShort { len: usize, kernel: usize },

    #[error("loss must be a 1x1 node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: negative sales value {value}")]
    NegativeSales { line: u64, value: String },

    #[error("unknown column `{0}` (expected month,community,attribute,sales)")]
    UnknownColumn(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("insufficient history: {months} months observed, need at least {required}")]
    InsufficientHistory { months: usize, required: usize },

    #[error("month {0} is not observed in the data")]
    MissingMonth(u32),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training aborted: {0}")]
    Numerical(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Numerical(_))
    }
}
