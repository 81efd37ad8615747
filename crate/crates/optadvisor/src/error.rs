//! Crate-wide error type.
//!
//! Every failure carries a stable machine-greppable code (see [`Error::code`])
//! so that callers, scripts, and the CLI can branch on the kind of failure
//! without parsing the human-readable text.

use thiserror::Error;

/// All errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A row of a CSV input could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    /// An input file does not look like the expected format at all.
    #[error("{0}")]
    Format(String),

    /// A profiled group is missing its cycle count or runtime.
    #[error("incomplete record for group {group}: missing {missing}")]
    IncompleteRecord { group: String, missing: String },

    /// The same counter appeared twice for one profiled group.
    #[error("duplicate counter '{counter}' for group {group}")]
    DuplicateCounter { group: String, counter: String },

    /// Two records share the same identity key within one dataset.
    #[error("duplicate record for group {group}")]
    DuplicateRecord { group: String },

    /// No feature schema can be built (no counter common to all records).
    #[error("{0}")]
    Schema(String),

    /// A record lacks a counter required by the feature schema.
    #[error("record {group} is missing schema counter '{counter}'")]
    MissingFeature { group: String, counter: String },

    /// A before/after sample pair violates its pairing invariants.
    #[error("pairing violation in entry '{entry}': {message}")]
    Pairing { entry: String, message: String },

    /// An optimization-database entry could not be loaded.
    #[error("entry '{entry}': {message}")]
    EntryLoad { entry: String, message: String },

    /// An id already exists where a fresh one is required.
    #[error("optimization id '{0}' already exists")]
    Conflict(String),

    /// An id was not found.
    #[error("unknown optimization id '{0}'")]
    UnknownId(String),

    /// A dataset is empty where a non-empty one is required.
    #[error("{0}")]
    EmptyDataset(String),

    /// A parameter is outside its allowed range.
    #[error("{0}")]
    InvalidParam(String),

    /// A query vector does not match a model's feature schema.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A model file was written by an incompatible version.
    #[error("unsupported model format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    /// A serialized payload could not be decoded.
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    /// An error that occurred while handling a specific optimization entry.
    #[error("optimization '{id}': {source}")]
    InEntry {
        id: String,
        #[source]
        source: Box<Error>,
    },

    /// An experiment selector matched no records, or the version lattice is
    /// incomplete for the selected groups.
    #[error("{0}")]
    Lattice(String),

    /// A profile resolved to more than one record and no selector was given.
    #[error("{0}")]
    Ambiguous(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-greppable code for this error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::Format(_) => "E_FORMAT",
            Error::IncompleteRecord { .. } => "E_INCOMPLETE_RECORD",
            Error::DuplicateCounter { .. } => "E_DUPLICATE_COUNTER",
            Error::DuplicateRecord { .. } => "E_DUPLICATE_RECORD",
            Error::Schema(_) => "E_SCHEMA",
            Error::MissingFeature { .. } => "E_MISSING_FEATURE",
            Error::Pairing { .. } => "E_PAIRING",
            Error::EntryLoad { .. } => "E_ENTRY_LOAD",
            Error::Conflict(_) => "E_CONFLICT",
            Error::UnknownId(_) => "E_UNKNOWN_ID",
            Error::EmptyDataset(_) => "E_EMPTY_DATASET",
            Error::InvalidParam(_) => "E_INVALID_PARAM",
            Error::SchemaMismatch(_) => "E_SCHEMA_MISMATCH",
            Error::VersionMismatch { .. } => "E_VERSION_MISMATCH",
            Error::CorruptPayload(_) => "E_CORRUPT_PAYLOAD",
            Error::InEntry { source, .. } => source.code(),
            Error::Lattice(_) => "E_LATTICE",
            Error::Ambiguous(_) => "E_AMBIGUOUS",
            Error::Io { .. } => "E_IO",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
