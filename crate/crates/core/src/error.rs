use std::path::PathBuf;

use crate::grid::GridShape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input or a violated precondition.
    Contract,
    /// Degenerate numeric input (constant maps, zero mass, ...).
    Numeric,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid contains a negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("grid has zero total mass")]
    ZeroMass,
    #[error("grid contains a non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("gaussian sigma must be >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("saliency map is degenerate and cannot be turned into a distribution")]
    DegenerateMap,
    #[error("saliency map has zero variance")]
    ZeroVariance,
    #[error("fixation set is empty")]
    EmptyFixations,
    #[error("{what} is empty")]
    EmptySet { what: &'static str },
    #[error("fixation ({row}, {col}) lies outside a {shape} grid")]
    OutOfBounds { row: usize, col: usize, shape: GridShape },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: GridShape, found: GridShape },
    #[error("grid shape must be at least 1x1, got {height}x{width}")]
    EmptyShape { height: usize, width: usize },
    #[error("grid has {found} values but shape {shape} needs {}", shape.len())]
    LengthMismatch { shape: GridShape, found: usize },
    #[error("sAUC map derivation needs a center bias density")]
    MissingCenterbias,
    #[error("center bias density is not strictly positive (pixel {index} = {value})")]
    ZeroCenterbias { index: usize, value: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no fixations remain after excluding stimulus {0:?}")]
    EmptyAfterExclusion(String),
    #[error("cross-validation needs at least 2 stimuli, got {0}")]
    TooFewStimuli(usize),
    #[error("unknown stimulus {0:?}")]
    UnknownStimulus(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    InvariantViolation { path: PathBuf, line: usize, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ZeroMass
            | Error::DegenerateMap
            | Error::ZeroVariance
            | Error::NonFinite { .. }
            | Error::ZeroCenterbias { .. } => ErrorKind::Numeric,
            Error::Io { .. } => ErrorKind::Io,
            _ => ErrorKind::Contract,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, message: message.into() }
    }

    pub(crate) fn invariant(
        path: impl Into<PathBuf>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::InvariantViolation { path: path.into(), line, message: message.into() }
    }
}
