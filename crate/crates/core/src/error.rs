use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient history: scheme needs {needed} states, buffer holds {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("no closed-form solution available for problem `{0}`")]
    NotAvailable(String),

    #[error("initial fit residual {residual:e} exceeds abort threshold {limit:e}")]
    InitFailure { residual: f64, limit: f64 },

    #[error("design matrix has effective rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("frequency support unresolved: S={coarse} at grid {grid_n}, S={fine} at grid {}", 2 * grid_n)]
    Unresolved {
        grid_n: usize,
        coarse: usize,
        fine: usize,
    },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
