use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid scenario or sweep configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Vector or matrix dimensions do not agree.
    #[error("shape error: {0}")]
    Shape(String),
    /// A user is missing from, or duplicated in, a group assignment.
    #[error("assignment error: {0}")]
    Assignment(String),
    /// The input carries no energy, so a ratio or signature is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
