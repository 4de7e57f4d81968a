use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid constellation order {0}: must be a perfect square >= 4")]
    InvalidConstellation(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric overflow in segment {segment}: non-finite field value")]
    NumericOverflow { segment: usize },

    #[error("non-finite value in stage `{stage}`")]
    NonFinite { stage: &'static str },

    #[error("training diverged at iteration {iteration}: {reason}")]
    TrainingDiverged {
        iteration: usize,
        reason: String,
        /// Raw parameter vector at the moment of failure.
        snapshot: Vec<f64>,
    },

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("degenerate spline input: {len} knots, need at least 3")]
    DegenerateInput { len: usize },

    #[error("insufficient z knots: {knots} (twin needs at least 2 segments)")]
    InsufficientZKnots { knots: usize },

    #[error("coordinate (z = {z}, t = {t}) is outside the surface domain")]
    OutOfDomain { z: f64, t: f64 },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the caller.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericOverflow { .. }
                | Error::NonFinite { .. }
                | Error::TrainingDiverged { .. }
                | Error::SingularSystem { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
