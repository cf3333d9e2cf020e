use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid kernel size {0}: must be odd and >= 3")]
    InvalidKernel(usize),
    #[error("invalid heatmap: {0}")]
    InvalidHeatmap(String),
    #[error("at least {needed} points required, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate span: {0}")]
    DegenerateSpan(String),
    #[error("at least {needed} marks required, got {got}")]
    TooFewMarks { needed: usize, got: usize },
    #[error("mark count {0} outside the supported range")]
    InvalidCount(usize),
    #[error("all marks share the same coordinate")]
    DegenerateRange,
    #[error("{0} marks exceed the 64-mark input capacity")]
    TooManyMarks(usize),
    #[error("ruler does not fit the canvas: {0}")]
    SpecOutOfBounds(String),
    #[error("tilt factor {0} outside [-0.4, 0.4]")]
    InvalidTilt(f64),
    #[error("no fitting ruler spec after {0} attempts")]
    CannotFit(usize),
    #[error("unsupported glyph {0:?}")]
    UnsupportedGlyph(char),
    #[error("annotation contains no rulers")]
    NoRulers,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
    #[error("estimator {0:?} requires a model")]
    MissingModel(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::EmptyInput => "EmptyInput",
            Error::InvalidSigma(_) => "InvalidSigma",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::InvalidKernel(_) => "InvalidKernel",
            Error::InvalidHeatmap(_) => "InvalidHeatmap",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::InvalidParams(_) => "InvalidParams",
            Error::DegenerateSpan(_) => "DegenerateSpan",
            Error::TooFewMarks { .. } => "TooFewMarks",
            Error::InvalidCount(_) => "InvalidCount",
            Error::DegenerateRange => "DegenerateRange",
            Error::TooManyMarks(_) => "TooManyMarks",
            Error::SpecOutOfBounds(_) => "SpecOutOfBounds",
            Error::InvalidTilt(_) => "InvalidTilt",
            Error::CannotFit(_) => "CannotFit",
            Error::UnsupportedGlyph(_) => "UnsupportedGlyph",
            Error::NoRulers => "NoRulers",
            Error::EmptyDataset => "EmptyDataset",
            Error::UnknownEstimator(_) => "UnknownEstimator",
            Error::MissingModel(_) => "MissingModel",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::SchemaViolation { .. } => "SchemaViolation",
            Error::MissingFile(_) => "MissingFile",
            Error::Image(_) => "Image",
            Error::Json(_) => "Json",
            Error::Io(_) => "Io",
        }
    }
}
