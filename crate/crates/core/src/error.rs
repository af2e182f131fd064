use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("policy produced a NaN index for arm {arm} after round {round}")]
    NanIndex { arm: usize, round: u64 },

    #[error("`{name}` is a fixed schedule and has no optimism index")]
    NotAnIndexPolicy { name: &'static str },

    #[error("arm {arm} was never pulled")]
    ZeroPulls { arm: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("drift window is empty: ceil({alpha}*{scale}) > floor({beta}*{scale})")]
    EmptyWindow { alpha: f64, beta: f64, scale: u64 },

    #[error("not enough samples: need at least {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
