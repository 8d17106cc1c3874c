use thiserror::Error;

use crate::field::Domain;

/// Errors raised by the toolkit.
///
/// Validation problems (bad parameters, mismatched grids, malformed files)
/// are kept apart from numerical failures so callers can map them to
/// different exit codes.
#[derive(Debug, Error)]
pub enum Se2Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("domain mismatch: expected {expected:?}, found {found:?}")]
    DomainMismatch { expected: Domain, found: Domain },
    #[error("field has zero total mass")]
    ZeroMass,
    #[error("malformed input: {0}")]
    Format(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("resonant Floquet exponent {nu} (within 1e-8 of an integer)")]
    Resonant { nu: num_complex::Complex64 },
    #[error("explicit scheme became unstable after {step} steps")]
    Unstable { step: usize },
    #[error("iterative solver did not converge in {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Se2Error {
    /// True for errors caused by the input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Se2Error::InvalidParams(_)
                | Se2Error::GridMismatch(_)
                | Se2Error::DomainMismatch { .. }
                | Se2Error::Format(_)
                | Se2Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Se2Error>;
