use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("sampling failed after {attempts} attempts (resonance tolerance {tolerance:e} too large for the requested dimension?)")]
    SamplingFailure { attempts: usize, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("index {index} out of range for {len} macro-spaces")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("decomposition has no designated equilibrium macro-space")]
    MissingEquilibrium,

    #[error("observable `{0}` is not Hermitian")]
    NonHermitian(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
