use thiserror::Error;

/// Errors raised by tensor operations and model construction.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid argument in {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("{op}: output has zero-size spatial extent ({detail})")]
    EmptyOutput { op: &'static str, detail: String },

    #[error("no valid pixels selected in {op}")]
    NoValidPixels { op: &'static str },

    #[error("non-finite value encountered in {op}: {detail}")]
    NonFinite { op: &'static str, detail: String },
}

impl TensorError {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::ShapeMismatch { op, detail: detail.into() }
    }

    pub fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::InvalidArgument { op, detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
