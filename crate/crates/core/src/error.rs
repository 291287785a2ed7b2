use alloc::boxed::Box;

/// Failures raised by the simulation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid Fock dimension {0} (need at least 2)")]
    InvalidDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("shape mismatch: expected dimension {expected}, got {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite amplitude encountered at t = {time}")]
    NumericOverflow { time: f64 },
    #[error("truncation overflow at t = {time}: top-level population {leakage:e} exceeds 1e-6")]
    TruncationOverflow { time: f64, leakage: f64 },
    #[error("classical amplitude diverged at t = {time}")]
    Divergence { time: f64 },
    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
