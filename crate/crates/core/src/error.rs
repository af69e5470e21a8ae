use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("Rate-WMMSE identity violated by {deviation:e} ({stream} stream)")]
    IdentityViolation { stream: &'static str, deviation: f64 },

    #[error("channel estimate is rank deficient (condition {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("precoder update problem is infeasible: {0}")]
    Infeasible(String),

    #[error("AWSMSE objective increased from {previous:e} to {current:e} at iteration {iteration}")]
    NonMonotonic {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("objective {objective:e} and sampled rates disagree by {deviation:e} at iteration {iteration}")]
    Bookkeeping {
        iteration: usize,
        objective: f64,
        deviation: f64,
    },

    #[error("need at least {needed} points in the fitting window, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("malformed problem dump: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
