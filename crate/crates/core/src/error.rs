use thiserror::Error;

/// Errors raised by the geometry, decomposition and policy routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The point handed to an operation does not lie in the expohedron.
    #[error("point is outside the expohedron: {0}")]
    Infeasible(String),

    /// A numerically degenerate configuration (zero direction, trivial instance, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("empty ranking distribution")]
    EmptyDistribution,
}

impl Error {
    /// True for errors caused by an infeasible target or point rather than malformed input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Infeasible(_) | Error::Degenerate(_) | Error::NonConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
