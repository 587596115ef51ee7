//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The network description violates a structural constraint.
    #[error("invalid topology: {reason}")]
    InvalidTopology { reason: String },

    /// The block of eliminated buses cannot be inverted, which happens when
    /// the eliminated buses contain a whole connected component.
    #[error("eliminated bus block is numerically singular (condition estimate {cond:.3e})")]
    SingularInteriorBlock { cond: f64 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// Zero or negative damping makes the algebraic rows unsolvable.
    #[error("nonpositive damping d[{index}] = {value} (1-based node {})", index + 1)]
    NonpositiveDamping { index: usize, value: f64 },

    /// The regression matrix does not have full column rank, typically a
    /// trajectory without enough excitation.
    #[error("rank-deficient regression: numerical rank {rank} < {required}")]
    RankDeficient { rank: usize, required: usize },

    /// The per-node closed form divides by c3 = c0*c2 - c1^2, which vanishes
    /// when the node's frequency and its increments are perfectly correlated.
    #[error("degenerate excitation at node {} (c3 ~ 0)", index + 1)]
    DegenerateNode { index: usize },

    #[error("state-matrix extraction unstable at node {}: fitted slope {slope:.3e}", index + 1)]
    ExtractionUnstable { index: usize, slope: f64 },

    #[error("true inertia is zero at node {}; relative error undefined", index + 1)]
    ZeroTruth { index: usize },

    #[error("matrix is not positive semidefinite (eigenvalue {min_eig:.3e} below tolerance)")]
    NotPsd { min_eig: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failed for `{field}`: {constraint}")]
    Validation { field: String, constraint: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub fn dims(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
