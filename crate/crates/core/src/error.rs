use thiserror::Error;

/// Errors raised by the envelope-testing toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate scale at r = {r}: {what} is zero")]
    DegenerateScale { r: f64, what: &'static str },

    #[error("k = {k} out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("alpha * (s + 1) = {0} is not an integer")]
    NonIntegerAlphaCount(f64),

    #[error("ties with the observed curve ({count} tied); break ties before computing a p-value")]
    Ties { count: usize },

    #[error("grid mismatch: expected {expected} points, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("pattern has {got} points, need at least {need}")]
    InsufficientPoints { got: usize, need: usize },

    #[error("pattern is unmarked")]
    Unmarked,

    #[error("marks are constant; mark-weighted summary is undefined")]
    DegenerateMarks,

    #[error("empty-space function reaches 1 on the whole grid; J is undefined everywhere")]
    EmptyJ,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{failed} of {total} replicates failed (limit 5%)")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DegenerateScale { .. } => "degenerate_scale",
            Error::RankOutOfRange { .. } => "rank_out_of_range",
            Error::NonIntegerAlphaCount(_) => "non_integer_alpha",
            Error::Ties { .. } => "ties",
            Error::GridMismatch { .. } => "grid_mismatch",
            Error::InvalidModel(_) => "invalid_model",
            Error::InsufficientPoints { .. } => "insufficient_points",
            Error::Unmarked => "unmarked",
            Error::DegenerateMarks => "degenerate_marks",
            Error::EmptyJ => "empty_j",
            Error::Fit(_) => "fit_failed",
            Error::TooManyFailures { .. } => "too_many_failures",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
