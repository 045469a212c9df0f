use thiserror::Error;

use crate::validate::ValidationIssue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodeError {
    #[error("authentication required")]
    Unauthenticated,
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("not permitted")]
    Unauthorized,
    #[error("unknown collection")]
    UnknownCollection,
    #[error("unknown entry")]
    UnknownEntry,
    #[error("unknown group")]
    UnknownGroup,
    #[error("unknown user")]
    UnknownUser,
    #[error("a collection with this name already exists in the group")]
    DuplicateName,
    #[error("username is taken")]
    DuplicateUsername,
    #[error("id conflict: {0}")]
    IdConflict(String),
    #[error("validation failed with {} issue(s)", .0.len())]
    ValidationFailed(Vec<ValidationIssue>),
    #[error("stale revision: current revision is {current}")]
    StaleRevision { current: u64 },
    #[error("entry is already approved")]
    AlreadyApproved,
    #[error("document could not be parsed: {0}")]
    ParseFailed(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("comment body is empty")]
    EmptyBody,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

impl NodeError {
    /// Machine token for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Unauthenticated => "UNAUTHENTICATED",
            NodeError::InvalidCredentials => "INVALID_CREDENTIALS",
            NodeError::Unauthorized => "UNAUTHORIZED",
            NodeError::UnknownCollection => "UNKNOWN_COLLECTION",
            NodeError::UnknownEntry => "UNKNOWN_ENTRY",
            NodeError::UnknownGroup => "UNKNOWN_GROUP",
            NodeError::UnknownUser => "UNKNOWN_USER",
            NodeError::DuplicateName => "DUPLICATE_NAME",
            NodeError::DuplicateUsername => "DUPLICATE_USERNAME",
            NodeError::IdConflict(_) => "ID_CONFLICT",
            NodeError::ValidationFailed(_) => "VALIDATION_FAILED",
            NodeError::StaleRevision { .. } => "STALE_REVISION",
            NodeError::AlreadyApproved => "ALREADY_APPROVED",
            NodeError::ParseFailed(_) => "PARSE_FAILED",
            NodeError::InvalidQuery(_) => "INVALID_QUERY",
            NodeError::EmptyBody => "EMPTY_BODY",
            NodeError::InvalidInput(_) => "BAD_REQUEST",
            NodeError::Storage(_) => "STORAGE_FAILURE",
        }
    }
}

impl From<std::io::Error> for NodeError {
    fn from(e: std::io::Error) -> Self {
        NodeError::Storage(e.to_string())
    }
}

impl From<crate::search::SearchError> for NodeError {
    fn from(e: crate::search::SearchError) -> Self {
        match e {
            crate::search::SearchError::InvalidQuery(m) => NodeError::InvalidQuery(m),
        }
    }
}
