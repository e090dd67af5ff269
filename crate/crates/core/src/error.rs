use thiserror::Error;

/// Errors raised by the library. Every variant carries a module-qualified
/// code (see [`Error::code`]) that the CLI reports in its error record.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: argument {value} outside the domain ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("stability: E[X(1)] > 0 (psi'(0+) = {slope:.6} < 0)")]
    Unstable { slope: f64 },

    #[error("null-recurrent model (psi'(0+) = 0) has no stationary workload")]
    NullRecurrent,

    #[error("unsupported model for {operation}: {reason}")]
    UnsupportedModel {
        operation: &'static str,
        reason: String,
    },

    #[error("unsupported functional for {operation}: {variant}")]
    UnsupportedFunctional {
        operation: &'static str,
        variant: String,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("truncation mass {mass:e} beyond x_max = {x_max} exceeds {limit:e}")]
    Truncation { x_max: f64, mass: f64, limit: f64 },

    #[error("pole at product factor j = {index}: psi(delta^j s) = q at delta^j s = {value}")]
    Pole { index: usize, value: f64 },

    #[error("degenerate linear solve: {0}")]
    Degenerate(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("tail fit window has {found} exceedances, need at least {needed}; widen the window")]
    TooFewExceedances { found: usize, needed: usize },

    #[error("heavy tail: {0}")]
    HeavyTail(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "numerics.domain",
            Error::InvalidModel(_) => "levy_model.invalid",
            Error::Unstable { .. } => "levy_model.stability",
            Error::NullRecurrent => "levy_model.null_recurrent",
            Error::UnsupportedModel { .. } => "fluctuation.unsupported_model",
            Error::UnsupportedFunctional { .. } => "embedded_chain.unsupported_functional",
            Error::NoConvergence { .. } => "numerics.no_convergence",
            Error::Truncation { .. } => "embedded_chain.truncation",
            Error::Pole { .. } => "steady_state.pole",
            Error::Degenerate(_) => "steady_state.degenerate",
            Error::Precondition(_) => "tail_asymptotics.precondition",
            Error::TooFewExceedances { .. } => "tail_asymptotics.window",
            Error::HeavyTail(_) => "tail_asymptotics.heavy_tail",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64, expected: &'static str) -> Error {
    Error::Domain {
        what,
        value,
        expected,
    }
}
