use thiserror::Error;

/// Errors raised by model construction, likelihood evaluation and sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HsmmError {
    /// An argument lies outside the domain of a distribution or function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A segment sequence violates one of its structural invariants.
    #[error("invalid segment sequence: {0}")]
    InvalidSegments(String),

    /// Model parameters are inconsistent or out of range.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A configuration field failed validation.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A documented precondition of an operation was not met.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Message passing lost all probability mass.
    #[error("numerical underflow: {0}")]
    Underflow(String),

    /// A chain has zero within-chain variance for a diagnosed parameter.
    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    /// An error raised inside the sampler, tagged with the iteration that failed.
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<HsmmError>,
    },
}

impl HsmmError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HsmmError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        HsmmError::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, HsmmError>;
