use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered")]
    NonFinite,

    #[error("requantization multiplier {0} is outside (0, 1)")]
    MultiplierOutOfRange(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid quantization range [{0}, {1}]")]
    InvalidRange(f64, f64),

    #[error("invalid quantization parameters: {0}")]
    InvalidQuantParams(String),

    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    #[error("not a model file (bad magic)")]
    BadMagic,

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u16),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("model file is truncated")]
    TruncatedFile,

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("unknown category folder {0:?}")]
    UnknownCategoryFolder(String),

    #[error("corpus contains no images")]
    EmptyCorpus,

    #[error("invalid category registry: {0}")]
    InvalidRegistry(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image: {0}")]
    CorruptImage(String),

    #[error("label table mismatch: {0}")]
    LabelMismatch(String),

    #[error("runtime must be positive, got {0} ms")]
    NonPositiveRuntime(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
}
