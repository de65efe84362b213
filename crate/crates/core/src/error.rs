use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Where an adaptive quadrature gave up.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDiagnostics {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub error_estimate: f64,
    pub intervals: usize,
}

impl fmt::Display for QuadratureDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "integral over [{}, {}] = {:e} with error estimate {:e} after {} subintervals",
            self.lower, self.upper, self.estimate, self.error_estimate, self.intervals
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported query: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("QBER is undefined: no sifted bits")]
    UndefinedQber,

    #[error("quadrature did not converge: {0}")]
    Quadrature(QuadratureDiagnostics),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidArgument(_) => "argument",
            Error::Unsupported(_) => "unsupported",
            Error::Format(_) => "format",
            Error::Estimation(_) => "estimation",
            Error::InvariantViolation(_) => "invariant",
            Error::UndefinedQber => "undefined_qber",
            Error::Quadrature(_) => "numeric",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}

pub(crate) use ensure;
