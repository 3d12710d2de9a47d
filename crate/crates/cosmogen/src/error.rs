use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Truncation leakage exceeded its threshold; rerun with a larger basis.
    #[error("truncation leakage {leakage:.3e} exceeds threshold {threshold:.3e} (n_max = {n_max})")]
    Leakage {
        leakage: f64,
        threshold: f64,
        n_max: usize,
    },

    /// The state norm underflowed even with log-scale tracking.
    #[error("state norm underflowed; trajectory is degenerate")]
    DegenerateNorm,

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trajectory {index} failed: {source}")]
    Worker {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
