use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("file does not start with the VFEB magic bytes")]
    BadMagic,
    #[error("unsupported VFEB version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported VFEB flags {0:#06x}")]
    UnsupportedFlags(u16),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("{0} unexpected trailing bytes after the name block")]
    TrailingData(usize),
    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("name block holds {found} names for {rows} rows")]
    NameCountMismatch { rows: usize, found: usize },
    #[error("name block is not valid UTF-8")]
    InvalidUtf8,
    #[error("row name {0:?} contains a newline")]
    InvalidName(String),
    #[error("matrix has no entries ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("csv line {line}: expected {expected} fields, found {found}")]
    RaggedRows {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("parse failure: {0}")]
    ParseFailure(String),
    #[error("data length {len} does not match {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} is not unit-norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("label {label} at position {index} is outside 0..{num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("class {class} has {available} items, {requested} shots requested")]
    NotEnoughItems {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("invalid shot set: {0}")]
    InvalidShotSet(String),
    #[error("normal matrix is singular (pivot {pivot} failed)")]
    SingularSystem { pivot: usize },
    #[error(
        "one-to-one mapping needs at least as many prompts ({prompts}) as classes ({classes})"
    )]
    InsufficientPrompts { prompts: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no held-out items left for evaluation")]
    NoTestItems,
    #[error("invalid model files: {0}")]
    InvalidModel(String),
}

impl Error {
    /// Stable machine-readable identifier, printed by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::IoFailure { .. } => "IoFailure",
            Error::BadMagic => "BadMagic",
            Error::UnsupportedVersion(_) => "UnsupportedVersion",
            Error::UnsupportedFlags(_) => "UnsupportedFlags",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::TrailingData(_) => "TrailingData",
            Error::NonFiniteEntry { .. } => "NonFiniteEntry",
            Error::NameCountMismatch { .. } => "NameCountMismatch",
            Error::InvalidUtf8 => "InvalidUtf8",
            Error::InvalidName(_) => "InvalidName",
            Error::EmptyMatrix { .. } => "EmptyMatrix",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::ParseFailure(_) => "ParseFailure",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::ZeroNormRow(_) => "ZeroNormRow",
            Error::LabelOutOfRange { .. } => "LabelOutOfRange",
            Error::EmptyClass(_) => "EmptyClass",
            Error::NotEnoughItems { .. } => "NotEnoughItems",
            Error::InvalidShotSet(_) => "InvalidShotSet",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::InsufficientPrompts { .. } => "InsufficientPrompts",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::NoTestItems => "NoTestItems",
            Error::InvalidModel(_) => "InvalidModel",
        }
    }

    /// Process exit status for the CLI. Usage errors (exit 2) come from clap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IoFailure { .. } => 3,
            Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::UnsupportedFlags(_)
            | Error::TruncatedPayload { .. }
            | Error::TrailingData(_)
            | Error::NameCountMismatch { .. }
            | Error::InvalidUtf8
            | Error::InvalidName(_)
            | Error::RaggedRows { .. }
            | Error::ParseFailure(_)
            | Error::InvalidModel(_) => 4,
            Error::NonFiniteEntry { .. } | Error::EmptyMatrix { .. } => 5,
            Error::ShapeMismatch { .. } | Error::DimensionMismatch(_) => 6,
            Error::NotNormalized { .. } | Error::ZeroNormRow(_) => 7,
            Error::LabelOutOfRange { .. }
            | Error::EmptyClass(_)
            | Error::NotEnoughItems { .. }
            | Error::InvalidShotSet(_)
            | Error::NoTestItems => 8,
            Error::SingularSystem { .. } => 9,
            Error::InsufficientPrompts { .. } => 10,
            Error::InvalidConfig(_) => 11,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
