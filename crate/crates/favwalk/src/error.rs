use thiserror::Error;

/// Errors reported by simulation, analytics, and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} unsupported (expected 1..=8)")]
    BadDimension(u32),

    #[error("operation requires dimension {expected}, got {got}")]
    DimensionMismatch { expected: u32, got: u32 },

    #[error("step count must be positive")]
    ZeroSteps,

    #[error("step cap {cap} reached before the stop rule was satisfied")]
    CappedRun {
        cap: u64,
        partial: Box<crate::walk::WalkRecord>,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("coordinate magnitude would exceed the safe lattice range")]
    CoordinateOverflow,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical routine failed to converge: {0}")]
    NoConvergence(String),

    #[error("empty sample")]
    EmptySample,

    #[error("walk record does not retain its path")]
    PathNotRetained,

    #[error("exact enumeration size {states} exceeds the budget {budget}")]
    EnumerationTooLarge { states: u64, budget: u64 },

    #[error("record at line {line} violates schema {schema}: {reason}")]
    SchemaViolation {
        schema: String,
        line: usize,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
