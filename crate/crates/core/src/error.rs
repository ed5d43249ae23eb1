use thiserror::Error;

/// Errors raised by the inference routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-binary value {value} at position {index}")]
    NonBinary { index: usize, value: f64 },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("both classes must be present with positive weight")]
    SingleClass,

    #[error("need at least {required} observations per class, found {positives} positive and {negatives} negative")]
    InsufficientClass {
        required: usize,
        positives: usize,
        negatives: usize,
    },

    /// All influence scores are equal, so the empirical distribution cannot be tilted.
    #[error("degenerate tilting family: all influence scores are equal")]
    DegenerateTilt,

    #[error("calibration failed: no tau in [{tau_lo}, 0) reaches level {target} (level at tau_lo = {level_lo}, {iterations} evaluations)")]
    CalibrationFailure {
        tau_lo: f64,
        level_lo: f64,
        target: f64,
        iterations: usize,
    },

    #[error("unknown model id `{0}`")]
    UnknownModel(String),

    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<Error> },

    #[error("training failed: {0}")]
    Training(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
