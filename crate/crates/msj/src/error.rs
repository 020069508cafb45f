use thiserror::Error;

/// Errors reported by the model, analysis, and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{what} out of range: {value} (valid 0..={max})")]
    OutOfRange {
        what: &'static str,
        value: u64,
        max: u64,
    },

    /// A state with no jobs in service has no next completion; such states
    /// never appear in a valid state space.
    #[error("no jobs in service: completion fractions undefined")]
    EmptyService,

    #[error("phase-vector enumeration too large: {size} vectors exceeds limit {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("steady-state solve failed: {0}")]
    SolveFailed(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
