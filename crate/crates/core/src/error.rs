use thiserror::Error;

/// Errors raised by the filtering toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("structural check failed: {0}")]
    Structural(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("outcome has probability {probability:e}, below the floor")]
    ZeroProbability { probability: f64 },

    #[error("observation has no support under the prior (evidence {evidence:e})")]
    NoSupport { evidence: f64 },

    #[error("record density {density:e} is below the floor")]
    ZeroDensityRecord { density: f64 },

    #[error("explicit scheme unstable: dt {dt:e} exceeds the limit {limit:e}")]
    Stability { dt: f64, limit: f64 },

    #[error("filter collapsed at t = {t}: {reason}")]
    FilterCollapse { t: f64, reason: String },

    #[error("matrix is singular")]
    Singular,
}

impl Error {
    /// True for failures caused by the numerics rather than by the caller's input.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::Stability { .. } | Error::FilterCollapse { .. } | Error::Singular
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
