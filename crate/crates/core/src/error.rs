use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CafdError>;

#[derive(Debug, Error)]
pub enum CafdError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // tensor file decoding
    #[error("bad magic bytes {0:?}, expected \"CAFD\"")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor format version {0}")]
    VersionMismatch(u8),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("invalid shape {0:?}: need 1 to 4 dimensions, each at least 1")]
    InvalidShape(Vec<u64>),
    #[error("dimension product overflows the addressable size: {0:?}")]
    DimensionOverflow(Vec<u64>),
    #[error("truncated tensor: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("tensor file has {0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("tensor holds {found} data but {expected} was required")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("payload length {len} does not match shape {shape:?}")]
    PayloadLength { len: usize, shape: Vec<usize> },

    // bundle validation
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("manifest does not reference required tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{tensor}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("probability row {row} of `{tensor}` is invalid (sum {sum}, min {min})")]
    InvalidProbability {
        tensor: String,
        row: usize,
        sum: f64,
        min: f64,
    },
    #[error("row {row} of `{tensor}`: stored prediction {stored} differs from logits argmax {argmax}")]
    PredMismatch {
        tensor: String,
        row: usize,
        stored: usize,
        argmax: usize,
    },
    #[error("class id {value} at row {row} of `{tensor}` outside [0, {num_classes})")]
    LabelOutOfRange {
        tensor: String,
        row: usize,
        value: i64,
        num_classes: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    // concepts
    #[error("normal equations are singular; retry with a ridge strength > 0")]
    SingularSystem,
    #[error("degenerate embedding: zero-norm vector at row {0}")]
    DegenerateEmbedding(usize),
    #[error("concept {0} is not a member of the concept table")]
    UnknownConcept(usize),
    #[error("internal invariant violated: {0}")]
    Internal(String),

    // model
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite value in feature row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature layout mismatch: model expects {expected} columns, got {found}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("feature matrix has not been standardized with fitted statistics")]
    NotFitted,

    // evaluation
    #[error("all paired differences are zero")]
    DegeneratePairs,
    #[error("fault clustering is empty; FDR is undefined")]
    UndefinedFdr,
    #[error("test input {0} is listed in the fault clustering but is not a failing input")]
    NotAFailure(usize),

    #[error("infeasible synthetic configuration: {0}")]
    Infeasible(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CafdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CafdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CafdError::InvalidArgument(msg.into())
    }
}
