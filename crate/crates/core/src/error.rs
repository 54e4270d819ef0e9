use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("regression has no samples to fit")]
    EmptyRegression,

    #[error("non-finite value in {what} at step {step}, path {path}")]
    NonFinite {
        what: &'static str,
        step: usize,
        path: usize,
    },

    #[error("backward step {step}, stratum {stratum}: {source}")]
    Step {
        step: usize,
        stratum: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iterative benchmark, rights level {level}, step {step}: {source}")]
    Level {
        level: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
