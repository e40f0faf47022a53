use thiserror::Error;

/// Errors surfaced by graph construction, evaluation, and data generation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("node {node} ({op}): {detail}")]
    Node {
        node: usize,
        op: &'static str,
        detail: String,
    },

    #[error("unbound input '{0}'")]
    UnboundInput(String),

    #[error("backward target must be 1x1, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("no forward values cached; run forward before backward")]
    NoForwardState,

    #[error("invalid argument: {0}")]
    InvalidArg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArg(msg.into())
    }
}
