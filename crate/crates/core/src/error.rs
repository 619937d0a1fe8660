use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class {0} has no samples")]
    EmptyClass(String),

    #[error("row {row}: expected dimension {expected}, found {found}")]
    RowDimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("embedding dimension must be at least 1")]
    ZeroDimension,

    #[error("row {row}: non-finite value")]
    NonFiniteValue { row: usize },

    #[error("class {0:?} already exists")]
    DuplicateClass(String),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("model has no trained classes")]
    UntrainedModel,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("bad magic bytes, not a PVEC file")]
    BadMagic,

    #[error("unsupported PVEC version {0}")]
    UnsupportedVersion(u8),

    #[error("unsupported PVEC dtype {0}")]
    UnsupportedDtype(u8),

    #[error("malformed PVEC header: {0}")]
    BadHeader(String),

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },

    #[error("trailing data: expected {expected} bytes, found {actual}")]
    TrailingData { expected: u64, actual: u64 },

    #[error("labels file is missing row {0}")]
    MissingRow(usize),

    #[error("labels file has duplicate row {0}")]
    DuplicateRow(usize),

    #[error("unexpected CSV header: {0}")]
    HeaderMismatch(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("probe set is empty")]
    EmptyProbeSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
