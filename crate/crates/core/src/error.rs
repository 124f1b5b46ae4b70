use thiserror::Error;

use crate::training::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("split would leave class {class} empty on the {side} side")]
    Stratification { class: usize, side: &'static str },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("unsupported format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: &'static str },

    #[error("format error in field `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("missing component `{0}`")]
    MissingComponent(String),

    #[error("stage error: {0}")]
    Stage(String),

    #[error("non-finite gradient at step {step} for parameter `{param}`")]
    NonFiniteGradient { step: usize, param: String },

    #[error("training diverged in stage {stage} at step {step}: {detail}")]
    Divergence {
        stage: u8,
        step: usize,
        detail: String,
        /// Last state whose loss and gradients were finite.
        last_finite: Option<Box<Checkpoint>>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage(_) | Error::MissingComponent(_) => 3,
            Error::Divergence { .. } | Error::NonFiniteGradient { .. } => 4,
            _ => 2,
        }
    }
}
