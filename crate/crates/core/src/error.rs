use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("raster dimensions must be non-zero, got {height}x{width}")]
    EmptyDimensions { height: usize, width: usize },
    #[error("raster dimensions {height}x{width} overflow the address space")]
    DimensionOverflow { height: usize, width: usize },
    #[error("raster payload has {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("probability {value} out of [0, 1] at index {index}")]
    OutOfRange { index: usize, value: f64 },
    #[error("threshold {0} must lie strictly inside (0, 1)")]
    InvalidThreshold(f64),
}

/// Failures decoding or encoding the on-disk raster formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: Vec<u8> },
    #[error("truncated {what}: needed {needed} bytes, {available} available")]
    Truncated {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),
    #[error("non-binary mask value {value} at pixel {index}")]
    NonBinaryMaskValue { index: usize, value: u8 },
    #[error("dimension overflow: {height}x{width}")]
    DimensionOverflow { height: u64, width: u64 },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TtaError {
    #[error("bundle needs exactly four entries, got {0}")]
    WrongEntryCount(usize),
    #[error("transform {0:?} appears more than once")]
    DuplicateTransform(crate::raster::FlipTransform),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("blade group has no training pixels")]
    EmptyGroup,
    #[error("pixel ({h}, {w}) outside {height}x{width} image")]
    OutOfBounds {
        h: usize,
        w: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid forest configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("confusion counts are empty")]
    EmptyConfusion,
    #[error("no defined values for {metric} at step {step}")]
    NoDefinedValues { step: String, metric: &'static str },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Tta(#[from] TtaError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("impossible corpus spec: {0}")]
    Impossible(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
