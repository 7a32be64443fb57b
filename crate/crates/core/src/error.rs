//! Error type shared across the simulator crates.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// A trace or profile file row that could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input that parsed but violates an invariant (range, ordering, shape).
    #[error("validation error: {0}")]
    Validation(String),

    /// A scenario or generator specification is inconsistent.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A request references a (model, pattern) pair with no profile entry.
    /// The scheduler never silently substitutes a default.
    #[error("unknown model-pattern pair: {0}")]
    UnknownModel(String),

    /// An operation that requires data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// The ready queue exceeded the configured FIFO depth.
    #[error("queue overflow at t={time}s: depth {depth} exceeds limit {limit}")]
    QueueOverflow {
        time: f64,
        depth: usize,
        limit: usize,
    },

    /// The engine ran past the configured wall-clock guard.
    #[error("simulation exceeded max simulated time of {0}s")]
    TimeGuard(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
