use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidOffspring(String),

    #[error("invalid interval set: {0}")]
    InvalidIntervals(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rejection sampler exceeded {limit} iterations (x={x}, t={t})")]
    RejectionLimit { limit: u64, x: f64, t: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} above target {target:e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("path genealogy was not recorded for this replicate")]
    GenealogyNotRecorded,

    #[error("invalid fixture file: {0}")]
    Fixture(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
