//! Errors surfaced to API clients and CLI users.

use std::fmt;

use tracescope_core::query::QueryError;
use tracescope_core::IngestError;

use crate::store::StoreError;

/// Broad class of a failure; decides the HTTP status and the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BadRequest,
    NotFound,
    Conflict,
    /// The input trace or bundle is unusable.
    Data,
    Io,
    Internal,
}

/// Every failure carries a stable machine code plus a human message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub code: &'static str,
    pub message: String,
    /// First offending lines for parse failures.
    pub details: Vec<String>,
}

impl ApiError {
    pub fn new(kind: ErrorKind, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            kind,
            code,
            message: message.into(),
            details: Vec::new(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::BadRequest, "BAD_REQUEST", message)
    }

    pub fn bad_range(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::BadRequest, "BAD_RANGE", message)
    }

    pub fn unknown_dataset(id: &str) -> Self {
        ApiError::new(
            ErrorKind::NotFound,
            "UNKNOWN_DATASET",
            format!("no dataset with id {id:?}"),
        )
    }

    pub fn status(&self) -> u16 {
        match self.kind {
            ErrorKind::BadRequest => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Data => 422,
            ErrorKind::Io | ErrorKind::Internal => 500,
        }
    }

    /// 1 usage, 2 data, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Io | ErrorKind::Internal => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        let msg = e.to_string();
        match e {
            QueryError::BadRange(_) => ApiError::bad_range(msg),
            QueryError::UnknownNode(_) => ApiError::new(ErrorKind::NotFound, "UNKNOWN_NODE", msg),
            QueryError::UnknownGuid(_) => ApiError::new(ErrorKind::NotFound, "UNKNOWN_GUID", msg),
            QueryError::UnknownCounter(_) => ApiError::new(ErrorKind::NotFound, "UNKNOWN_COUNTER", msg),
            QueryError::UnknownLocation(_) => ApiError::new(ErrorKind::NotFound, "UNKNOWN_LOCATION", msg),
            QueryError::Cancelled => ApiError::new(ErrorKind::Conflict, "SUPERSEDED", msg),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let mut err = ApiError::new(ErrorKind::Data, "PARSE_ERROR", e.to_string());
        if let IngestError::Malformed { errors, .. } = &e {
            err.details = errors
                .iter()
                .take(10)
                .map(|l| format!("line {} (offset {}): {}", l.line, l.offset, l.message))
                .collect();
        }
        err
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::Ingest(e) => e.into(),
            StoreError::UnknownDataset(id) => ApiError::unknown_dataset(&id),
            StoreError::InvalidLabel => ApiError::bad_request(msg),
            StoreError::Build(_) => ApiError::new(ErrorKind::Data, "INVALID_BUNDLE_OPTIONS", msg),
            StoreError::UnsupportedVersion { .. } => ApiError::new(ErrorKind::Data, "UNSUPPORTED_VERSION", msg),
            StoreError::Corrupt(_) => ApiError::new(ErrorKind::Data, "CORRUPT_BUNDLE", msg),
            StoreError::DiskFull(_) => ApiError::new(ErrorKind::Io, "DISK_FULL", msg),
            StoreError::Io(_) => ApiError::new(ErrorKind::Io, "IO_ERROR", msg),
        }
    }
}
