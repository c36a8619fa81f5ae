use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{axis} of {size} px is not a multiple of {multiple}")]
    DimensionMismatch {
        axis: &'static str,
        size: usize,
        multiple: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("timestamps must be strictly increasing ({prev}s followed by {next}s)")]
    TimestampOrder { prev: f64, next: f64 },

    #[error("wrong sequence format: {0}")]
    WrongFormat(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(
        "token budget exceeded: {vision} vision / {total} total tokens \
         (limits {max_vision} / {max_total})"
    )]
    BudgetExceeded {
        vision: usize,
        total: usize,
        max_vision: usize,
        max_total: usize,
    },

    #[error("unsatisfiable budget: a single frame needs {frame_tokens} tokens but only {available} are available")]
    UnsatisfiableBudget {
        frame_tokens: usize,
        available: usize,
    },

    #[error("encoder rejected by shape probe: {0}")]
    EncoderShape(String),

    #[error("{task} needs {needed} text box(es), sample has {found}")]
    InsufficientBoxes {
        task: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Budget and contract violations, as opposed to bad input.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            Error::BudgetExceeded { .. }
                | Error::UnsatisfiableBudget { .. }
                | Error::EncoderShape(_)
        )
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
