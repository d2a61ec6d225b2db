use std::path::PathBuf;

use thiserror::Error;

/// Which of the two feature streams a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Rgb,
    Depth,
}

impl Modality {
    pub fn tag(self) -> u8 {
        match self {
            Modality::Rgb => 0,
            Modality::Depth => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Modality::Rgb),
            1 => Some(Modality::Depth),
            _ => None,
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{modality} dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch {
        modality: Modality,
        expected: usize,
        found: usize,
    },

    #[error("sample {id}: {modality} dimension mismatch: expected {expected}, found {found}")]
    SampleDimension {
        id: u64,
        modality: Modality,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: expected {expected} values, found {found}")]
    RowDimension {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in sample {id}")]
    NonFinite { id: u64 },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),

    #[error("modality tag mismatch: expected {expected}, file holds {found}")]
    ModalityMismatch { expected: Modality, found: Modality },

    #[error("unknown modality tag {0}")]
    UnknownModality(u8),

    #[error("duplicate sample id {0}")]
    DuplicateId(u64),

    #[error("duplicate category label {0:?}")]
    DuplicateLabel(String),

    #[error("unknown category label {0:?}")]
    UnknownLabel(String),

    #[error("category {0:?} has no samples")]
    EmptyCategory(String),

    #[error("no data")]
    EmptyData,

    #[error("ids missing from {source_name}: {ids:?}{more}", more = if *.total > .ids.len() { format!(" ({} total)", .total) } else { String::new() })]
    IdMismatch {
        source_name: &'static str,
        ids: Vec<u64>,
        total: usize,
    },

    #[error("silhouette needs at least two categories, model has {0}")]
    SingleCategory(usize),

    #[error("category {label:?} has {count} samples, fewer than {folds} folds")]
    TooFewForFolds {
        label: String,
        count: usize,
        folds: usize,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. }
            | Error::SampleDimension { .. }
            | Error::RowDimension { .. } => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidValue(_) => "invalid_value",
            Error::InvalidConfig(_) => "invalid_config",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::Truncated { .. } | Error::TrailingBytes(_) => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::ModalityMismatch { .. } | Error::UnknownModality(_) => "modality",
            Error::DuplicateId(_) | Error::DuplicateLabel(_) => "duplicate",
            Error::UnknownLabel(_) => "unknown_label",
            Error::EmptyCategory(_) | Error::EmptyData => "empty",
            Error::IdMismatch { .. } => "id_mismatch",
            Error::SingleCategory(_) => "single_category",
            Error::TooFewForFolds { .. } => "too_few_for_folds",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the CLI. Documented in `cbcl --help`.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "io" => 3,
            "parse" => 4,
            "bad_magic" => 5,
            "unsupported_version" => 6,
            "truncated" => 7,
            "checksum" => 8,
            "dimension" => 9,
            "non_finite" => 10,
            "duplicate" => 11,
            "id_mismatch" => 12,
            "unknown_label" => 13,
            "empty" => 14,
            "single_category" => 15,
            "too_few_for_folds" => 16,
            "modality" => 17,
            "invalid_config" | "invalid_value" => 18,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
