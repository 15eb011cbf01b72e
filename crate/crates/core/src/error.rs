use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid orientation label {0} (expected 1..=8)")]
    InvalidOrientation(i64),
    #[error("image {height}x{width} is smaller than the required {min_height}x{min_width}")]
    ImageTooSmall { height: u32, width: u32, min_height: u32, min_width: u32 },
    #[error("image height {0} leaves an empty body-structure part")]
    HeightTooSmall(u32),
    #[error("k-means needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("part {part} has {got} descriptors, need at least {needed}")]
    InsufficientDescriptors { part: usize, needed: usize, got: usize },
    #[error("linear system is singular even after jitter")]
    SingularSystem,
    #[error("covariance matrix is singular even after jitter")]
    SingularCovariance,
    #[error("kernel PCA is rank deficient: {positive} positive eigenvalues, {requested} requested")]
    RankDeficient { positive: usize, requested: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("no valid training pairs: {0}")]
    NoValidPairs(String),
    #[error("bag is empty")]
    EmptyBag,
    #[error("selection is empty")]
    EmptySelection,
    #[error("signatures for one bag mix identities or cameras")]
    MixedIdentity,
    #[error("metric model for this method is not fitted: {0}")]
    UnfittedMetric(&'static str),
    #[error("probe identity {0} is missing from the gallery")]
    ProbeIdentityMissing(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed manifest at line {line}: {message}")]
    ManifestMalformed { line: usize, message: String },
    #[error("dataset has no usable rows")]
    NoUsableRows,
    #[error("archive error: {0}")]
    Archive(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            SingularSystem | SingularCovariance | RankDeficient { .. } => ErrorKind::Numeric,
            InvalidArgument(_) | Config(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}
