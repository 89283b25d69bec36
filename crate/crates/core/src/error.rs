use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum LppError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("insufficient statistics: {0}")]
    Statistics(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, LppError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(LppError::Parameter(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LppError::Domain(msg.into()))
}

pub(crate) fn infeasible<T>(msg: impl Into<String>) -> Result<T> {
    Err(LppError::Infeasible(msg.into()))
}

impl Clone for LppError {
    fn clone(&self) -> Self {
        match self {
            LppError::Parameter(m) => LppError::Parameter(m.clone()),
            LppError::Domain(m) => LppError::Domain(m.clone()),
            LppError::Infeasible(m) => LppError::Infeasible(m.clone()),
            LppError::Validation(m) => LppError::Validation(m.clone()),
            LppError::Size(m) => LppError::Size(m.clone()),
            LppError::Statistics(m) => LppError::Statistics(m.clone()),
            LppError::Io(e) => LppError::Io(std::io::Error::new(e.kind(), e.to_string())),
            LppError::Format(m) => LppError::Format(m.clone()),
        }
    }
}
