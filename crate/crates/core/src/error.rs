//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by construction, evaluation, and verification routines.
///
/// The variants map onto the CLI exit-code contract: `Validation` and
/// `Parse` are spec errors (exit 2), `Domain` and `Precondition` are
/// domain/precondition errors (exit 3), `Verification` is an oracle
/// disagreement (exit 4).
#[derive(Debug, Clone, Error)]
pub enum RiskError {
    /// Malformed or inconsistent input data (bad knots, probabilities, schemas).
    #[error("validation error: {0}")]
    Validation(String),
    /// A quantity is mathematically undefined or divergent for the given inputs.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented operation precondition does not hold.
    #[error("precondition error: {0}")]
    Precondition(String),
    /// Failed to parse an external artifact (CSV, shorthand strings).
    #[error("parse error: {0}")]
    Parse(String),
    /// An independent check disagreed beyond tolerance.
    #[error("verification failure: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, RiskError>;
