use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient audio: {samples} samples, need at least {window} for one window")]
    InsufficientAudio { samples: usize, window: usize },

    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature dimension mismatch: model expects {expected}, got {actual}")]
    FeatureDimensionMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("training diverged at step {step} (loss {loss})")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("empty model")]
    EmptyModel,

    #[error("model too large for finite differencing: {params} parameters (limit {limit})")]
    ModelTooLarge { params: usize, limit: usize },

    #[error("empty cluster")]
    EmptyCluster,

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("missing embedding: {0}")]
    MissingEmbedding(String),

    #[error("unsupported container: {0}")]
    UnsupportedContainer(String),

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("rank exceeded: requested {requested} components, at most {max} available")]
    RankExceeded { requested: usize, max: usize },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("undefined similarity: zero vector")]
    UndefinedSimilarity,

    #[error(
        "reference not bilingual in requested pair: speaker {speaker} lacks language {language}"
    )]
    NotBilingual { speaker: String, language: String },

    #[error("epsilon {0} outside [0, 1]; enable extrapolation to allow it")]
    EpsilonOutOfRange(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
