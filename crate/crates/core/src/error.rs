use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    /// A functional was evaluated on too few samples (or trimming removed all of them).
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A constant or parameter violates the preconditions of the component it configures.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input lies outside the domain of an operation (covariate outside [0,1]^d, outcome outside [a,b], bin out of range).
    #[error("domain error: {0}")]
    Domain(String),

    /// A call-order precondition was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The kernel has no closed-form value for the requested functional.
    #[error("no closed form for {functional} on {kernel}")]
    NoClosedForm { functional: String, kernel: String },
}

pub type Result<T> = std::result::Result<T, LabError>;
