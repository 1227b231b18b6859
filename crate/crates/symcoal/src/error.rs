use thiserror::Error;

/// Errors produced by the symcoal library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("invalid collision signature: {0}")]
    InvalidSignature(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
