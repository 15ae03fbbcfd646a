use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("revision conflict: session is at revision {current}, request was for {requested}")]
    RevisionConflict { current: u64, requested: u64 },
    #[error("choice {choice} out of range for a query of {q} alternatives")]
    ChoiceOutOfRange { choice: usize, q: usize },
    #[error("session {0} is closed")]
    SessionClosed(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] pbo_core::Error),
    #[error("journal: {0}")]
    Journal(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::RevisionConflict { .. } => "revision_conflict",
            ServiceError::ChoiceOutOfRange { .. } => "choice_out_of_range",
            ServiceError::SessionClosed(_) => "session_closed",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Core(e) => match e {
                pbo_core::Error::ChoiceOutOfRange { .. } => "choice_out_of_range",
                pbo_core::Error::NewtonNonConvergence { .. }
                | pbo_core::Error::NotPositiveDefinite { .. }
                | pbo_core::Error::HyperparameterFit(_) => "model_failure",
                _ => "invalid_request",
            },
            ServiceError::Journal(_) | ServiceError::Io(_) => "internal",
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

/// Wire form of an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, ServiceError>;
