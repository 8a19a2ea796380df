use std::io;

use crate::tensor::TensorKind;

pub type Result<T> = std::result::Result<T, CatpError>;

#[derive(Debug, thiserror::Error)]
pub enum CatpError {
    #[error("not a CATP file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown tensor kind code {0}")]
    UnknownKind(u32),
    #[error("expected a {expected} tensor, found {found}")]
    KindMismatch {
        expected: TensorKind,
        found: TensorKind,
    },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("{extra} unexpected bytes after payload")]
    TrailingData { extra: u64 },
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("negative probability {value} at flat index {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("invalid dimensions {dims:?}: {reason}")]
    InvalidDims {
        dims: Vec<usize>,
        reason: &'static str,
    },
    #[error("layer index {index} out of range for {layers} layer(s)")]
    LayerOutOfRange { index: usize, layers: usize },
    #[error("invalid layer selection: {0}")]
    InvalidSelection(String),
    #[error("cannot rank an empty column")]
    EmptyColumn,
    #[error("weight vector has length {actual}, expected {expected}")]
    WeightLengthMismatch { expected: usize, actual: usize },
    #[error("image weights are invalid: {0}")]
    InvalidWeights(String),
    #[error("all image-token scores are zero; cannot normalize")]
    ZeroMassWeights,
    #[error("negative self-attention score {value} for token {token}")]
    NegativeScore { token: usize, value: f64 },
    #[error("prune ratio {0} outside [0, 1]")]
    RatioOutOfRange(f64),
    #[error("keep count {k} outside [0, {n}]")]
    KOutOfRange { k: usize, n: usize },
    #[error("invalid toy-model config: {0}")]
    InvalidConfig(&'static str),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
