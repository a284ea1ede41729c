//! Library-wide error type.

use thiserror::Error;

/// Errors surfaced by simulation, optimization, and I/O operations.
#[derive(Debug, Error)]
pub enum SimError {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input failed structural validation (invariants, schemas, formats).
    #[error("validation error: {0}")]
    Validation(String),

    /// A trace line could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The least-squares design matrix is rank deficient.
    #[error("rank-deficient design: column '{column}' is linearly dependent on {dependents:?}")]
    RankDeficient {
        column: String,
        dependents: Vec<String>,
    },

    /// A call graph contains a cycle.
    #[error("call graph cycle: {}", cycle.join(" -> "))]
    CallGraphCycle { cycle: Vec<String> },

    /// No feasible choice exists; names the binding constraint.
    #[error("infeasible: {constraint}: {detail}")]
    Infeasible { constraint: String, detail: String },

    /// Unknown policy or enumeration value.
    #[error("unknown {what} '{got}'; valid: {valid:?}")]
    Unknown {
        what: &'static str,
        got: String,
        valid: Vec<&'static str>,
    },

    /// File or serialization problem.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
