use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Posterior integration failed to produce a finite, positive evidence.
    #[error("posterior quadrature failed ({reason}); {observations} observations, prior sd {prior_sd}")]
    Numerical {
        reason: String,
        observations: usize,
        prior_sd: f64,
    },

    #[error("trial already enrolled its maximum of {n_max} patients")]
    TrialComplete { n_max: usize },

    #[error("final analysis not ready: {0}")]
    NotReady(String),

    #[error("validation failed at event {seq}: {reason}")]
    Validation { seq: u64, reason: String },

    #[error("sequence conflict: expected event {expected}, got {got}")]
    Conflict { expected: u64, got: u64 },

    #[error("trial state error: {0}")]
    State(String),

    #[error("integrity error at event {seq}: {reason}")]
    Integrity { seq: u64, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// Stable machine-readable code for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_configuration",
            Error::Numerical { .. } => "numerical_error",
            Error::TrialComplete { .. } => "trial_complete",
            Error::NotReady(_) => "not_ready",
            Error::Validation { .. } => "validation_error",
            Error::Conflict { .. } => "sequence_conflict",
            Error::State(_) => "state_error",
            Error::Integrity { .. } => "integrity_error",
            Error::Io(_) => "io_error",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
