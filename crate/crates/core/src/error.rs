use thiserror::Error;

use crate::model::LatticePoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    /// The cost increments never reach the requested threshold along an axis.
    #[error("placement threshold {threshold} is never reached along the {axis} axis (cost increments do not diverge)")]
    Divergence { threshold: f64, axis: &'static str },

    #[error("point ({}, {}) is not in the complement or on the boundary of the placement set", .0.m, .0.n)]
    NotOnBoundary(LatticePoint),

    #[error("hitting probabilities are not defined at the renewal origin")]
    OriginNotEvaluable,

    #[error("placement set violates threshold structure: {0}")]
    Structure(String),

    #[error("value grid too small: {0}")]
    Truncation(String),

    #[error("fixed-point iteration did not terminate within {cap} iterations (trace: {trace:?})")]
    IterationCap { cap: usize, trace: Vec<f64> },

    #[error("value iteration did not converge within {cap} sweeps (last change {residual:e})")]
    NoConvergence { cap: usize, residual: f64 },

    #[error("relay budget {rho:?} is infeasible; smallest expected relay count reached was {best:?}")]
    Infeasible { rho: f64, best: f64 },

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error("unknown session `{0}`")]
    UnknownSession(String),

    #[error("session `{0}` has ended")]
    SessionEnded(String),

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            message: message.into(),
        }
    }
}
