//! Error type shared across the crate.
//!
//! Two broad classes matter to callers: invalid inputs (bad graphs, bad
//! parameter values, malformed files) and numerical failures (non-positive-
//! definite matrices, ill-conditioned information). The CLI maps the former
//! to exit code 2 and the latter to exit code 3.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// Structural problems with a graph: self-loops, duplicate edges,
    /// out-of-range node indices, disconnectedness.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// Mismatched dimensions between related objects.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A parameter or input value outside its valid range.
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// Numerical failure: factorization breakdown, rank deficiency beyond
    /// what the model tolerates, ill-conditioned information matrices.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed input file contents (as opposed to OS-level IO failure).
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl Error {
    /// True for errors that indicate a numerical breakdown rather than
    /// invalid input; used by callers that need to distinguish "you gave me
    /// garbage" from "the computation fell over".
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}
