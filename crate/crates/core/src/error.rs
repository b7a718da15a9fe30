use std::path::PathBuf;

/// Errors produced by the style transfer library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("zero valid records in {0}")]
    EmptyCorpus(PathBuf),
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedder mismatch: `{0}` vs `{1}`")]
    EmbedderMismatch(String, String),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("unknown author `{0}`")]
    UnknownAuthor(String),
    #[error("score `{name}` out of range: {value}")]
    ScoreOutOfRange { name: &'static str, value: f64 },
    #[error("missing score `{0}`")]
    MissingScore(String),
    #[error("non-finite loss at step {step} (last finite loss {last_finite:?})")]
    NonFiniteLoss { step: usize, last_finite: Option<f64> },
    #[error("evaluation embedder `{0}` must differ from the rerank embedder")]
    EmbedderReuse(String),
    #[error("malformed {what}: {reason}")]
    Malformed { what: &'static str, reason: String },
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
