//! Crate-wide error type and result alias.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // -- audio ingestion --
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt wav header: {0}")]
    CorruptHeader(String),

    // -- configuration --
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    // -- numerics --
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    // -- classifier training --
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training data contains a single class only")]
    SingleClassInput,
    #[error("non-finite feature value in vector {vector}, dimension {dim}")]
    NonFiniteFeature { vector: usize, dim: usize },
    #[error("class {0} has no training vectors")]
    EmptyClass(String),

    // -- fusion --
    #[error("supervectors belong to different utterances: {0} vs {1}")]
    UtteranceMismatch(String, String),
    #[error("supervector component counts differ: {0} vs {1}")]
    ComponentCountMismatch(usize, usize),
    #[error("score vectors cover different speaker sets")]
    SpeakerSetMismatch,
    #[error("score vector is not posterior-normalized: {0}")]
    NotNormalized(String),
    #[error("empty score vector")]
    EmptyScores,

    // -- manifests and experiments --
    #[error("manifest parse error at line {line}: {message}")]
    ManifestParse { line: usize, message: String },
    #[error("duplicate utterance id: {0}")]
    DuplicateUtterance(String),
    #[error("missing audio for utterance {utterance}: {path}")]
    MissingAudio { utterance: String, path: PathBuf },
    #[error("speaker {speaker} has {available} eligible utterances, needs {required}")]
    InsufficientUtterances {
        speaker: String,
        available: usize,
        required: usize,
    },
    #[error("empty decision list")]
    EmptyDecisions,
    #[error("data leakage: test utterance {utterance} reached {stage} training")]
    LeakageDetected { utterance: String, stage: String },

    // -- serialization and storage --
    #[error("bad archive: {0}")]
    ArchiveFormat(String),
    #[error("config hash mismatch: {0}")]
    ConfigHashMismatch(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an [`std::io::Error`] with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 invalid config/manifest,
    /// 3 training failure, 4 I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_)
            | Error::ManifestParse { .. }
            | Error::DuplicateUtterance(_)
            | Error::MissingAudio { .. }
            | Error::InsufficientUtterances { .. }
            | Error::ConfigHashMismatch(_) => 2,

            Error::NumericalFailure(_)
            | Error::DimensionMismatch { .. }
            | Error::InsufficientData(_)
            | Error::EmptyTrainingSet
            | Error::SingleClassInput
            | Error::NonFiniteFeature { .. }
            | Error::EmptyClass(_)
            | Error::UtteranceMismatch(..)
            | Error::ComponentCountMismatch(..)
            | Error::SpeakerSetMismatch
            | Error::NotNormalized(_)
            | Error::EmptyScores
            | Error::EmptyDecisions
            | Error::LeakageDetected { .. } => 3,

            Error::NotFound(_)
            | Error::UnsupportedFormat(_)
            | Error::CorruptHeader(_)
            | Error::ArchiveFormat(_)
            | Error::Io { .. }
            | Error::Json(_) => 4,
        }
    }
}
