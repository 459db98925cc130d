use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
///
/// The variants follow the failure classes used throughout: bad arguments
/// (`Domain`), bad input data (`Data`), numerical breakdown (`Numeric`),
/// a broken structural assumption or caller contract (`Contract`) and
/// requests that are well-formed but not supported (`Unsupported`).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IssError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl IssError {
    pub fn domain(msg: impl Into<String>) -> Self {
        IssError::Domain(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        IssError::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        IssError::Numeric(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        IssError::Contract(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        IssError::Unsupported(msg.into())
    }

    /// True for the numerical-breakdown class (used by the CLI exit-code map).
    pub fn is_numeric(&self) -> bool {
        matches!(self, IssError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, IssError>;
