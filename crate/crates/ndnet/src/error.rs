use thiserror::Error;

/// Errors surfaced by the autodiff core.
#[derive(Debug, Error)]
pub enum NdError {
    /// Operand shapes are incompatible for the requested operation.
    #[error("{context}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    /// Mean pooling over zero rows.
    #[error("mean pool over empty input")]
    EmptyPool,

    /// `backward` was called on a non-scalar value.
    #[error("backward requires a 1x1 scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    /// An optimizer update was rejected because a gradient was NaN or infinite.
    #[error("non-finite gradient in parameter tensor {tensor_index} (entry {entry_index})")]
    NonFiniteGradient {
        tensor_index: usize,
        entry_index: usize,
    },

    /// Gradient list does not line up with the model parameters.
    #[error("optimizer received {got} gradient tensors, model has {expected} parameter tensors")]
    GradientCountMismatch { expected: usize, got: usize },

    /// Invalid layer construction.
    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    /// Checkpoint file problems.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NdError {
    pub(crate) fn shape(context: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        NdError::ShapeMismatch {
            context,
            left: format!("{}x{}", left.0, left.1),
            right: format!("{}x{}", right.0, right.1),
        }
    }
}
