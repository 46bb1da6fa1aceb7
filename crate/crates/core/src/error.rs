use std::io;

use crate::rid::Rid;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure class, used for CLI exit codes and HTTP status selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or references supplied by the caller.
    User,
    /// Checksum, validation or corruption failures.
    Integrity,
    /// Filesystem, network or service failures.
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{column}` in table `{table}`")]
    UnknownColumn { table: String, column: String },
    #[error("unknown record {0}")]
    UnknownRid(String),
    #[error("record {rid} is not live in table `{table}`")]
    StaleRid { table: String, rid: Rid },
    #[error("table `{0}` already exists")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("column name `{0}` is reserved")]
    ReservedColumn(String),
    #[error("dangling reference: {table}.{column} = `{value}` does not resolve to a live record")]
    DanglingReference {
        table: String,
        column: String,
        value: String,
    },
    #[error("record {rid} is still referenced by table `{referencing_table}`")]
    InboundReference { rid: Rid, referencing_table: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("snapshot {requested} is in the future (current is {current})")]
    FutureSnapshot { requested: u64, current: u64 },
    #[error("catalog format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("checksum mismatch: expected {expected}, computed {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("{0} already exists")]
    Duplicate(String),
    #[error("`{text}` collides with existing term `{term}`")]
    TermCollision { text: String, term: String },
    #[error("{0} not found")]
    NotFound(String),
    #[error("membership cycle: {path}")]
    Cycle { path: String },
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid object path `{0}`")]
    InvalidPath(String),
    #[error("namespace conflict at `{0}`")]
    NamespaceConflict(String),
    #[error("invalid bag: {0}")]
    InvalidBag(String),
    #[error("identifier `{0}` not found")]
    IdNotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("execution {execution} failed: {detail}")]
    ExecutionFailed { execution: Rid, detail: String },
    #[error("transfer failed: {0}")]
    Transfer(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("index: {0}")]
    Index(#[from] rusqlite::Error),
}

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownTable(_) => "unknown_table",
            Error::UnknownColumn { .. } => "unknown_column",
            Error::UnknownRid(_) => "unknown_rid",
            Error::StaleRid { .. } => "stale_rid",
            Error::DuplicateTable(_) => "duplicate_table",
            Error::DuplicateColumn { .. } => "duplicate_column",
            Error::ReservedColumn(_) => "reserved_column",
            Error::DanglingReference { .. } => "dangling_reference",
            Error::InboundReference { .. } => "inbound_reference",
            Error::InvalidValue(_) => "invalid_value",
            Error::FutureSnapshot { .. } => "future_snapshot",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::Integrity(_) => "integrity_error",
            Error::ChecksumMismatch { .. } => "checksum_mismatch",
            Error::Duplicate(_) => "duplicate",
            Error::TermCollision { .. } => "term_collision",
            Error::NotFound(_) => "not_found",
            Error::Cycle { .. } => "cycle_detected",
            Error::InvalidState(_) => "invalid_state",
            Error::InvalidPath(_) => "invalid_path",
            Error::NamespaceConflict(_) => "namespace_conflict",
            Error::InvalidBag(_) => "invalid_bag",
            Error::IdNotFound(_) => "id_not_found",
            Error::Conflict(_) => "conflict",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ExecutionFailed { .. } => "execution_failed",
            Error::Transfer(_) => "transfer_failed",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
            Error::Index(_) => "index_error",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Integrity(_) | Error::ChecksumMismatch { .. } | Error::InvalidBag(_) => {
                ErrorClass::Integrity
            }
            Error::Io(_) | Error::Transfer(_) | Error::Index(_) | Error::Csv(_) => ErrorClass::Io,
            _ => ErrorClass::User,
        }
    }

    /// True when the caller asked for something that does not exist.
    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            Error::UnknownTable(_)
                | Error::UnknownColumn { .. }
                | Error::UnknownRid(_)
                | Error::NotFound(_)
                | Error::IdNotFound(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidValue(msg.into())
    }
}
