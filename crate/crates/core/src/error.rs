use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("covariance kernel is not positive semidefinite on the grid (min pivot {min_pivot:e})")]
    KernelNotPsd { min_pivot: f64 },
    #[error("value outside admissible domain: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("embedding resolution too coarse: {0}")]
    Resolution(String),
    #[error("inverse local time not reached: level {level}, needed {needed} upcrossings, found {found}")]
    NotReached { level: usize, needed: usize, found: usize },
    #[error("config validation failed at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error("replicate {index} panicked: {message}")]
    ReplicatePanic { index: u64, message: String },
}

pub type Result<T> = std::result::Result<T, SimError>;

impl From<serde_json::Error> for SimError {
    fn from(e: serde_json::Error) -> Self {
        SimError::Serialization(e.to_string())
    }
}

impl From<csv::Error> for SimError {
    fn from(e: csv::Error) -> Self {
        SimError::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for SimError {
    fn from(e: toml::de::Error) -> Self {
        SimError::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for SimError {
    fn from(e: toml::ser::Error) -> Self {
        SimError::Serialization(e.to_string())
    }
}
