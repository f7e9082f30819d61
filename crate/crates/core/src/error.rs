use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("duplicate attribute name `{0}`")]
    DuplicateName(String),

    #[error("attribute `{attribute}` references unknown category `{category}`")]
    UnknownCategory { attribute: String, category: String },

    #[error("empty identifier in {0}")]
    EmptyIdentifier(&'static str),

    #[error("unknown attribute column `{0}`")]
    UnknownAttribute(String),

    #[error("manifest columns do not match the schema: {0}")]
    ColumnMismatch(String),

    #[error("non-binary label `{value}` at line {line}, column {column}")]
    NonBinaryLabel {
        value: String,
        line: usize,
        column: usize,
    },

    #[error("duplicate instance id `{0}`")]
    DuplicateInstance(String),

    #[error("unknown partition tag `{0}`")]
    UnknownPartition(String),

    #[error("row alignment mismatch at row {row}: expected `{expected}`, found `{found}`")]
    Misaligned {
        row: usize,
        expected: String,
        found: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("no attributes left to evaluate after masking and exclusion")]
    NoIncludedAttributes,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing domain `{0}` in data")]
    MissingDomain(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("backward called without a recorded forward pass")]
    NoForwardRecord,

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }
}
