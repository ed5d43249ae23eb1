use thiserror::Error;

/// Errors raised by the simulation harness.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] mabt_core::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no records to aggregate")]
    Empty,
}

pub type Result<T> = std::result::Result<T, SimError>;
