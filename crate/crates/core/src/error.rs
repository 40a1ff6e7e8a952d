use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the scoring engine and its I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not a VAST tensor")]
    BadMagic,

    #[error("unsupported VAST version {0:#04x}")]
    UnsupportedVersion(u8),

    #[error("unsupported VAST dtype {0:#04x}")]
    UnsupportedDtype(u8),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite element at index {0}")]
    NonFinite(usize),

    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("sample {0:?} not found in manifest")]
    NotFound(String),

    #[error("sample {id:?} has no {what}")]
    MissingPath { id: String, what: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need ≥ 2 authentic samples, found {0}")]
    TooFewSamples(usize),

    #[error("degenerate calibration set: reference spread {0:e} is below the floor")]
    DegenerateCalibration(f64),

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("zero-norm embedding vector")]
    ZeroNorm,

    #[error("patch grid has a single patch, no neighbours to compare")]
    NoNeighbours,

    #[error("mask is not binary at index {0}")]
    NotBinary(usize),

    #[error("scores contain a single class; both labels are required")]
    SingleClass,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input or configuration, as
    /// opposed to unreadable or corrupt data.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Manifest(_)
                | Error::DuplicateId(_)
                | Error::NotFound(_)
                | Error::MissingPath { .. }
                | Error::Config(_)
                | Error::TooFewSamples(_)
                | Error::DegenerateCalibration(_)
                | Error::CalibrationMismatch(_)
                | Error::SingleClass
                | Error::Empty(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
