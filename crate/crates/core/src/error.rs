use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems with the contents of an AFF1 tensor file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorFileError {
    #[error("bad magic, expected \"AFF1\"")]
    BadMagic,
    #[error("unsupported rank {0}, expected 1 or 2")]
    BadRank(u8),
    #[error("zero-sized dimension in shape {0:?}")]
    EmptyDim(Vec<u32>),
    #[error("truncated: header declares {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("non-finite value at element {0}")]
    NonFinite(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {source}", path.display())]
    TensorFile { path: PathBuf, source: TensorFileError },

    #[error("{}:{line}: {msg}", path.display())]
    ManifestLine { path: PathBuf, line: usize, msg: String },

    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}`: {label} {value} outside [{min}, {max}]")]
    LabelOutOfRange { id: String, label: &'static str, value: f64, min: f64, max: f64 },

    #[error("record `{id}`: referenced file {} does not exist", path.display())]
    MissingFile { id: String, path: PathBuf },

    #[error("record `{id}` has no {modality} features")]
    MissingModality { id: String, modality: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Divergence { epoch: usize, msg: String },

    #[error("SMO did not converge after {iterations} iterations (KKT gap {gap:.3e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Divergence, non-convergence and undefined statistics, as opposed to
    /// bad input or usage.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NonConvergence { .. } | Error::UndefinedCorrelation(_)
        )
    }
}
