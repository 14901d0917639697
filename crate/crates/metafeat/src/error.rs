use thiserror::Error;

/// Errors surfaced by the meta-feature pipeline.
#[derive(Debug, Error)]
pub enum MfError {
    #[error("ingestion: {0}")]
    Ingestion(String),

    #[error("dataset invariant violated: {0}")]
    Invariant(String),

    #[error("subsample of {requested} rows from a dataset with {available}")]
    SubsampleBounds { requested: usize, available: usize },

    #[error("need at least {needed} datasets, got {got}")]
    NotEnoughDatasets { needed: usize, got: usize },

    #[error("cannot split {count} datasets into {k} folds")]
    SplitError { count: usize, k: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },

    #[error("gamma must be positive, got {0}")]
    InvalidGamma(f64),

    #[error("configuration index {index} out of range for grid of {size}")]
    ConfigIndex { index: usize, size: usize },

    #[error("hpo: {0}")]
    Hpo(String),

    #[error("gp: Cholesky factorization failed even at jitter {max_jitter}")]
    CholeskyFailed { max_jitter: f64 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Net(#[from] ndnet::NdError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
