//! Crate-wide error type.

use std::fmt;

/// Errors produced by planning, execution and simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The head count is not divisible by the requested chip count.
    IndivisibleHeads { num_heads: usize, n_chips: usize },
    /// The intermediate dimension is not divisible by the requested chip count.
    IndivisibleIntermediate { intermediate_dim: usize, n_chips: usize },
    /// Tensor shapes do not agree for the requested operation.
    ShapeMismatch { expected: String, got: String },
    /// A KV-cache append would exceed the configured capacity.
    CacheFull { capacity: usize },
    /// Weights, caches or chip state do not match the partition plan.
    PlanMismatch(String),
    /// The simulator inputs are mutually inconsistent.
    InconsistentPlan(String),
    /// A configuration value or file is invalid.
    InvalidConfig(String),
    /// File I/O failed (test-vector and report files).
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::IndivisibleHeads { num_heads, n_chips } => {
                write!(f, "num_heads {num_heads} is not divisible by n_chips {n_chips}")
            }
            Self::IndivisibleIntermediate { intermediate_dim, n_chips } => {
                write!(
                    f,
                    "intermediate_dim {intermediate_dim} is not divisible by n_chips {n_chips}"
                )
            }
            Self::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Self::CacheFull { capacity } => {
                write!(f, "kv-cache is full (capacity {capacity})")
            }
            Self::PlanMismatch(msg) => write!(f, "plan mismatch: {msg}"),
            Self::InconsistentPlan(msg) => write!(f, "inconsistent plan: {msg}"),
            Self::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            Self::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
