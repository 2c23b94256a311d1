use thiserror::Error;

use crate::model::{Component, State};

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// A state value reached the positivity floor. Callers treat this as the
    /// onset of quenching rather than a crash.
    #[error("singularity: {component} = {value:e} at node {node} is at or below the floor")]
    Singularity { component: Component, node: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {reason}")]
    NumericalFailure { reason: String, last_state: Option<Box<State>> },

    #[error("logic error: {0}")]
    Logic(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parameter regime error: {0}")]
    Regime(String),

    #[error("indeterminate: {reason} (t = {t}, rhs norm = {rhs_norm:e})")]
    Indeterminate { reason: String, t: f64, rhs_norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    pub(crate) fn numerical(reason: impl Into<String>, last: Option<State>) -> Self {
        Error::NumericalFailure { reason: reason.into(), last_state: last.map(Box::new) }
    }

    /// Short machine-readable tag, used in CSV rows and JSON reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Configuration(_) => "configuration",
            Error::Resolution(_) => "resolution",
            Error::Quadrature(_) => "quadrature",
            Error::Singularity { .. } => "singularity",
            Error::Domain(_) => "domain",
            Error::NumericalFailure { .. } => "numerical_failure",
            Error::Logic(_) => "logic",
            Error::UnsupportedMode(_) => "unsupported_mode",
            Error::Precondition(_) => "precondition",
            Error::Regime(_) => "regime",
            Error::Indeterminate { .. } => "indeterminate",
            Error::InsufficientData(_) => "insufficient_data",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
