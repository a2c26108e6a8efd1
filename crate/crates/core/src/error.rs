use std::io;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("field contains non-finite values (diverged)")]
    NonFinite,
    #[error("diverged at step {step}")]
    Diverged { step: usize },
    #[error("cannot rescale a constant field")]
    ConstantField,
    #[error("unsupported order {0}")]
    UnsupportedOrder(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    TrainingDiverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Failures while reading or writing the binary dataset and checkpoint containers.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("file truncated")]
    Truncated,
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("config fingerprint mismatch: checkpoint {found:#018x}, model {expected:#018x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error("missing tensor {0:?}")]
    MissingTensor(String),
    #[error("unexpected tensor {0:?}")]
    UnexpectedTensor(String),
    #[error("trailing bytes after payload")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
