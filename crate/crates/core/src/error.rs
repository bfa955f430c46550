use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no eigenvalue bracket found in s-interval [{lo}, {hi}] (found {found} of {wanted} roots)")]
    RootBracketing {
        lo: f64,
        hi: f64,
        found: usize,
        wanted: usize,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite state in sample {sample} at step {step}")]
    NonFinite { sample: usize, step: usize },

    #[error("fundamental matrix ill-conditioned at step {step} (condition estimate {condition:.3e})")]
    IllConditioned { step: usize, condition: f64 },

    #[error("trajectory batch was simulated without {0}")]
    MissingRecord(&'static str),

    #[error("empty sample")]
    EmptySample,

    #[error("Riccati solver failed: {0}")]
    Riccati(String),

    #[error("optimization diverged at iteration {iteration}: risk {risk:.6e} exceeds 10x initial {initial:.6e}")]
    Divergence {
        iteration: usize,
        risk: f64,
        initial: f64,
    },

    #[error("{path}: {reason}")]
    Config { path: String, reason: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RootBracketing { .. }
                | Error::Singular(_)
                | Error::NonFinite { .. }
                | Error::IllConditioned { .. }
                | Error::Riccati(_)
                | Error::Divergence { .. }
        )
    }
}
