use thiserror::Error;

/// Errors produced by the model, sampler, estimators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{technique} has no detector {detector}")]
    UnsupportedPort {
        technique: &'static str,
        detector: &'static str,
    },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("{excluded} of {trials} trials excluded (limit 10%); last cause: {cause}")]
    TooManyExclusions {
        excluded: usize,
        trials: usize,
        cause: String,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad configuration rather than numerics or data.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::UnsupportedPort { .. }
                | Error::Configuration(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
