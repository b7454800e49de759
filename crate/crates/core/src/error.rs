use thiserror::Error;

/// Errors produced by the core toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("wavelength {wavelength} nm is outside the table range [{min}, {max}] nm")]
    OutOfRange { wavelength: f64, min: f64, max: f64 },

    #[error("parse error at line {line}: {message}")]
    ParseLine { line: usize, message: String },

    #[error("parse error at byte offset {offset}: {message}")]
    ParseOffset { offset: usize, message: String },

    #[error("wavelengths must be strictly increasing (line {line}: {wavelength} nm)")]
    NotMonotonic { line: usize, wavelength: f64 },

    #[error("wavelength grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("parameter on the box boundary: {0}")]
    Boundary(String),

    #[error("negative radiance {value} at sample {index}")]
    NegativeRadiance { index: usize, value: f64 },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("invalid edit: {0}")]
    InvalidEdit(String),

    #[error("missing skin probability map")]
    MissingProbability,

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
