use thiserror::Error;

use crate::geometry::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside an operation's domain (mismatched spaces, negative
    /// step sizes, parameters outside `[0, 1]`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A payload or descriptor violates its invariants.
    #[error("validation error: {0}")]
    Validation(String),

    /// The objective is `+inf` everywhere the solver can reach.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative solver ran out of budget. Carries the best iterate seen.
    #[error("solver error: {message} (residual {residual:e})")]
    Solver {
        message: String,
        best: Option<Box<Point>>,
        residual: f64,
    },

    /// The requested resolvent strategy cannot handle the functional.
    #[error("strategy error: {0}")]
    Strategy(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Strips step annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self.root(), Error::Validation(_) | Error::Domain(_))
    }
}
