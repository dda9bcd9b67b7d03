use thiserror::Error;

use crate::optimizer::RunRecord;

pub type Result<T> = std::result::Result<T, ZoError>;

#[derive(Debug, Error)]
pub enum ZoError {
    #[error("dimension must be at least 1 (got {0})")]
    Dimension(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("inconsistent constants: {0}")]
    Constant(String),

    /// A schedule or check needs a problem constant that was not declared.
    #[error("missing constant {0}")]
    MissingConstant(&'static str),

    #[error("capability not available: {0}")]
    Capability(String),

    #[error("size mismatch: {0}")]
    Size(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },

    /// The iterate became non-finite or left the divergence guard. The
    /// partial record is attached.
    #[error("run diverged after {} steps", .0.summary.steps)]
    Diverged(Box<RunRecord>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
