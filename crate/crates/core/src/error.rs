use std::io;

use thiserror::Error;

/// Every failure the measurement pipeline can report.
///
/// [`Error::code`] gives the stable machine-readable name used by the CLI and
/// the HTTP service.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{0}` must be positive")]
    NonPositiveValue(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("invalid disparity at pixel ({u}, {v})")]
    InvalidDisparity { u: f64, v: f64 },
    #[error("point depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("census window {width}x{height} does not fit the image")]
    WindowTooLarge { width: usize, height: usize },
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("malformed PFM: {0}")]
    MalformedPfm(String),
    #[error("no pixel survived reprojection")]
    EmptyCloud,
    #[error("triangulation produced no faces")]
    EmptyMesh,
    #[error("no surface vertex within {radius} px of ({u}, {v})")]
    NoVertexInRadius { u: f64, v: f64, radius: f64 },
    #[error("vertices {0} and {1} lie on disconnected surfaces")]
    Unreachable(usize, usize),
    #[error("path needs at least two distinct points")]
    DegeneratePath,
    #[error("mask has no set pixel")]
    EmptyMask,
    #[error("mask holds {0} instance(s), need at least 2")]
    InsufficientInstances(usize),
    #[error("marker {0} projects outside the image")]
    MarkerOutOfView(String),
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error("pixel ({u}, {v}) lies outside the {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("image decoding failed: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingField(_) => "MissingField",
            Error::NonPositiveValue(_) => "NonPositiveValue",
            Error::MalformedFile(_) => "MalformedFile",
            Error::InvalidDisparity { .. } => "InvalidDisparity",
            Error::NonPositiveDepth(_) => "NonPositiveDepth",
            Error::WindowTooLarge { .. } => "WindowTooLarge",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MalformedPfm(_) => "MalformedPfm",
            Error::EmptyCloud => "EmptyCloud",
            Error::EmptyMesh => "EmptyMesh",
            Error::NoVertexInRadius { .. } => "NoVertexInRadius",
            Error::Unreachable(..) => "Unreachable",
            Error::DegeneratePath => "DegeneratePath",
            Error::EmptyMask => "EmptyMask",
            Error::InsufficientInstances(_) => "InsufficientInstances",
            Error::MarkerOutOfView(_) => "MarkerOutOfView",
            Error::UnsupportedShape(_) => "UnsupportedShape",
            Error::OutOfBounds { .. } => "OutOfBounds",
            Error::InvalidParams(_) => "InvalidParams",
            Error::Image(_) => "Image",
            Error::Io(_) => "IoFailure",
        }
    }

    /// True for errors caused by bad user input (files, flags, parameters)
    /// rather than by a pipeline stage failing on valid input.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MissingField(_)
                | Error::NonPositiveValue(_)
                | Error::MalformedFile(_)
                | Error::MalformedPfm(_)
                | Error::DimensionMismatch { .. }
                | Error::OutOfBounds { .. }
                | Error::InvalidParams(_)
                | Error::WindowTooLarge { .. }
                | Error::MarkerOutOfView(_)
                | Error::UnsupportedShape(_)
                | Error::Image(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
