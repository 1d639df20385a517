use thiserror::Error;

#[derive(Debug, Error)]
pub enum EimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported metric `{0}` for this task")]
    UnsupportedMetric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl EimError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            EimError::Config(_) => 2,
            EimError::Numerical(_) | EimError::NotPositiveDefinite(_) | EimError::Training { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, EimError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EimError::Dimension { expected, got })
    }
}
