use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate labels: training data must contain both classes")]
    DegenerateLabels,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("alignment link {i}-{j} out of bounds for {src_len}x{tgt_len} sentence pair")]
    AlignmentOutOfBounds {
        i: usize,
        j: usize,
        src_len: usize,
        tgt_len: usize,
    },

    #[error("constraints exceed length budget ({needed} tokens > max_len {max_len})")]
    ConstraintBudget { needed: usize, max_len: usize },

    #[error("no hypothesis satisfies all constraints")]
    Unsatisfiable,

    #[error("scorer returned an invalid distribution at step {step}: {reason}")]
    InvalidDistribution { step: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
