use thiserror::Error;

/// Errors produced by the dataset, decomposition, selection and filtering layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("wrong domain: {0}")]
    Domain(String),

    #[error("axis error: {0}")]
    Axis(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    Convergence { rows: usize, cols: usize },

    #[error("rank {rank} exceeds the {available} available singular triplets")]
    Rank { rank: usize, available: usize },

    #[error("invalid Hankel window {window} for a series of length {len}")]
    Window { window: usize, len: usize },

    #[error("empty singular value spectrum")]
    Empty,

    #[error("too few singular values for a noise fit: {got} (need at least {need})")]
    TooFewValues { got: usize, need: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input files or arguments rather than
    /// numerical failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::Index(_)
                | Error::InvalidParameter(_)
                | Error::Window { .. }
                | Error::Rank { .. }
                | Error::Csv(_)
        )
    }
}
