use thiserror::Error;

/// Errors raised anywhere in the laboratory.
///
/// The variants line up with the CLI exit codes: parameter problems exit
/// with 2, solver problems with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("Picard iteration does not contract: iterate norm {norm:.6e} exceeds {limit:.6e}")]
    NonContraction { norm: f64, limit: f64 },
    #[error("solver failure in {module}: {message}")]
    Solver { module: &'static str, message: String },
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("missing oracle: {0}")]
    MissingOracle(String),
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by bad input rather than a failing computation.
    pub fn is_parameter_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Structural(_)
                | Error::Domain(_)
                | Error::Ordering(_)
                | Error::MissingOracle(_)
                | Error::UndefinedRatio(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
