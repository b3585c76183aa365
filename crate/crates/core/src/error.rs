use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("degenerate importance weight: proposal density is {density} at {task:?}")]
    DegenerateWeight { task: Vec<f64>, density: f64 },

    /// The weighted cross-entropy update received no selected tasks; callers keep the
    /// current parameters.
    #[error("empty selection, no cross-entropy update")]
    EmptySelection,

    #[error("enumeration needs {required} paths, limit is {limit}")]
    EnumerationTooLarge { required: u128, limit: u128 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::ParameterDomain(msg.into())
}
