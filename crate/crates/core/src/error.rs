use std::path::PathBuf;

use thiserror::Error;

use crate::label::HallucinationLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated container: {0}")]
    Truncated(String),

    #[error("container layout error: {0}")]
    Layout(String),

    #[error("malformed container header: {0}")]
    Header(String),

    #[error("trace invariant violated: {0}")]
    TraceInvariant(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("annotation error at line {line}: {message}")]
    Annotation { line: usize, message: String },

    #[error("malformed annotation: {0}")]
    MalformedAnnotation(String),

    #[error("layer {0} is not present in the trace")]
    MissingLayer(usize),

    #[error("zero-norm hidden state at layer {0}")]
    ZeroNorm(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("attention layer {0} has no positive weight")]
    ZeroAttention(usize),

    #[error("non-finite input at feature {0}")]
    NonFinite(usize),

    #[error("dataset contains a single class ({0})")]
    SingleClass(String),

    #[error("class {0} has fewer than 2 examples, cannot oversample")]
    ClassTooSmall(HallucinationLabel),

    #[error("loss became NaN at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("sample sets differ between strategies: {0}")]
    MismatchedSamples(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("lexicon error: {0}")]
    Lexicon(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
