use std::path::PathBuf;

use thiserror::Error;

use crate::manifest::Modality;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unreadable volume {path}: {reason}")]
    UnreadableVolume { path: PathBuf, reason: String },

    #[error("manifest line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },

    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),

    #[error("patient `{id}` is missing the {modality} volume")]
    MissingModality { id: String, modality: Modality },

    #[error("unsupported schema version {found} in {what} (expected {expected})")]
    SchemaVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("volume has zero intensity variance")]
    ZeroVariance,

    #[error("degenerate volume: axis {axis} has {len} voxel(s)")]
    DegenerateAxis { axis: usize, len: usize },

    #[error("registration failed: normalized cross-correlation is flat (constant image)")]
    CorrelationPlateau,

    #[error("tumor mask is empty{0}")]
    EmptyMask(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("only one class present; ROC analysis needs both positives and negatives")]
    SingleClass,

    #[error("cohort too small: {0}")]
    TooFewCases(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("pretrained weights: {0}")]
    Pretrained(String),

    #[error("missing ensemble for the {0} branch")]
    MissingEnsemble(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 4,
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
