use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into two families that the CLI maps onto exit codes:
/// configuration/input problems (exit 1) and numerical failures (exit 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: index {index} out of bounds for extent {extent}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        extent: usize,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    LossNotScalar(Vec<usize>),

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed data at byte offset {offset}: {message}")]
    DataFormat { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 1 for validation/input errors, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}
