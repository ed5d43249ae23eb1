//! Commands behind the `mabt` binary.

pub mod bound;
pub mod predictions;
pub mod report;
pub mod simulate;

use std::fmt;

/// Process exit code for bad input, configuration or arguments.
pub const EXIT_INPUT: i32 = 2;
/// Process exit code for a calibration that failed without a fallback.
pub const EXIT_CALIBRATION: i32 = 3;

/// An error carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_INPUT,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<mabt_core::Error> for Failure {
    fn from(e: mabt_core::Error) -> Self {
        let code = match e {
            mabt_core::Error::CalibrationFailure { .. } => EXIT_CALIBRATION,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<mabt_simlab::SimError> for Failure {
    fn from(e: mabt_simlab::SimError) -> Self {
        match e {
            mabt_simlab::SimError::Core(inner) => inner.into(),
            other => Failure::input(other),
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

/// Runs `f` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CmdResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::input(anyhow::anyhow!(
            "--threads must be positive"
        ))),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(Failure::input)?;
            Ok(pool.install(f))
        }
    }
}
