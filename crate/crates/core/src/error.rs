use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("invalid hop")]
    InvalidHop,
    #[error("invalid fft size {0}")]
    InvalidFftSize(usize),
    #[error("expected full-resolution spectrogram with 33 bins, got {0}")]
    ExpectedFullResolution(usize),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("mask out of range: start {start} width {width} exceeds {bands} bands")]
    MaskOutOfRange {
        start: usize,
        width: usize,
        bands: usize,
    },
    #[error("invalid rotation offset {0}, expected -1, 0 or 1")]
    InvalidRotation(i64),
    #[error("jitter offset of {offset} samples exceeds window length {len}")]
    JitterTooLarge { offset: usize, len: usize },
    #[error("rotation offset {offset} out of range for {channels} channels")]
    OffsetOutOfRange { offset: i64, channels: usize },
    #[error("unscorable symbol {0:?}")]
    UnscorableSymbol(String),
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(char),
    #[error("lm parse error at line {line}: {msg}")]
    LmParse { line: usize, msg: String },
    #[error("undefined CER: reference is empty")]
    UndefinedCer,
    #[error("bad magic or version: {0}")]
    BadMagic(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("unsupported sample rate {0} Hz")]
    UnsupportedSampleRate(u32),
    #[error("label timestamps must be strictly increasing and inside the recording (label {index})")]
    BadTimestamps { index: usize },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has shape {actual:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("non-finite value in tensor {0}")]
    NonFinite(String),
    #[error("sharing violated: {0}")]
    SharingViolated(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    /// True for failures caused by non-finite numbers rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
