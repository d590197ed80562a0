use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid terrain spec: {0}")]
    Terrain(String),

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("linear program infeasible (auxiliary optimum {0:.3e})")]
    LpInfeasible(f64),

    #[error("factorization failed at pivot {pivot}: {reason}")]
    Factorization { pivot: usize, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
