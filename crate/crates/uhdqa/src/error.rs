//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("rectangle ({x0},{y0}) {w}x{h} exceeds image bounds {width}x{height}")]
    OutOfBounds {
        x0: u32,
        y0: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("requested {requested} patches but the grid holds only {available}")]
    InsufficientPatches { requested: usize, available: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("feature fusion requires at least one enabled stage")]
    EmptyFusion,

    #[error("failed to load weights from {path}: {reason}")]
    WeightsLoad { path: PathBuf, reason: String },

    #[error("training diverged to a non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("significance test degenerate: {0}")]
    DegenerateTest(String),

    #[error("manifest parse error at line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },

    #[error("manifest validation failed: {0}")]
    ManifestValidation(String),

    #[error("duplicate media path {path:?} at lines {first} and {second}")]
    DuplicateMedia {
        path: String,
        first: usize,
        second: usize,
    },

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("cannot split: {0}")]
    SplitImpossible(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for validation problems in the
    /// user's inputs, 3 for runtime/training failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::OutOfBounds { .. }
            | Error::DegenerateInput(_)
            | Error::InsufficientPatches { .. }
            | Error::Shape(_)
            | Error::EmptyFusion
            | Error::UndefinedCorrelation(_)
            | Error::DegenerateTest(_)
            | Error::ManifestParse { .. }
            | Error::ManifestValidation(_)
            | Error::DuplicateMedia { .. }
            | Error::NoFrames(_)
            | Error::SplitImpossible(_)
            | Error::EmptyInput(_)
            | Error::Config(_) => 2,
            Error::WeightsLoad { .. }
            | Error::TrainingDiverged { .. }
            | Error::Image(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 3,
        }
    }
}

/// Attach a path to a bare `std::io::Error`.
pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub type Result<T> = std::result::Result<T, Error>;
