use thiserror::Error;

/// Errors raised by the group, path, rate, walk and Monte Carlo layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A group descriptor failed one of the structural identities.
    #[error("invalid group: {identity} violated ({detail})")]
    InvalidGroup { identity: String, detail: String },

    #[error("operation requires a step-2 group, got step {0}")]
    NotStep2(usize),

    #[error("Legendre transform did not converge; best lower bound {best_lower_bound}")]
    NonConvergence { best_lower_bound: f64 },

    #[error("no feasible control found; best residual {best_residual:e} (tolerance {tolerance:e})")]
    Infeasible { best_residual: f64, tolerance: f64 },
}

impl Error {
    /// Stable machine-readable code used by the CLI error report.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidGroup { .. } => "invalid_group",
            Error::NotStep2(_) => "not_step2",
            Error::NonConvergence { .. } => "legendre_nonconvergence",
            Error::Infeasible { .. } => "rate_infeasible",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn group(identity: &str, detail: impl Into<String>) -> Self {
        Error::InvalidGroup {
            identity: identity.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
