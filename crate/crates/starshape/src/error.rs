//! Error taxonomy shared by every module.
//!
//! The split mirrors how callers react: `Validation` means the caller's
//! input never made sense, `Structural` means the input was well-formed but
//! the constructed object violates a property the construction is supposed
//! to guarantee (typically: `eps` outside the admissible window), and the
//! remaining variants are ordinary numerical-method failures.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: non-increasing separation points, empty sweep
    /// lists, non-decreasing schedules and the like.
    #[error("validation: {0}")]
    Validation(String),

    /// A guaranteed property of the construction failed numerically.
    /// Carries a witness (location, direction, offending value) so the
    /// failure is reproducible.
    #[error("structural failure: {0}")]
    Structural(String),

    /// A query left the region where a chart or map is defined
    /// (injectivity radius, chart radius, interpolation stencil).
    #[error("domain of definition exceeded: {0}")]
    ChartDomain(String),

    /// An iterative method ran out of its iteration budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Grid too coarse for the requested check.
    #[error("resolution: {0}")]
    Resolution(String),

    /// Hypothesis of an operation violated (e.g. nonlinearity with
    /// non-positive base value).
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("expression: {0}")]
    Expression(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn chart_domain(msg: impl Into<String>) -> Self {
        Error::ChartDomain(msg.into())
    }

    pub fn no_convergence(msg: impl Into<String>) -> Self {
        Error::NoConvergence(msg.into())
    }

    pub fn resolution(msg: impl Into<String>) -> Self {
        Error::Resolution(msg.into())
    }

    pub fn hypothesis(msg: impl Into<String>) -> Self {
        Error::Hypothesis(msg.into())
    }

    pub fn expression(msg: impl Into<String>) -> Self {
        Error::Expression(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
