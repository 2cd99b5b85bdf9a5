use std::path::PathBuf;

use thiserror::Error;

use crate::image::Rect;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reflection margin {margin} must be smaller than the image's smaller side {min_side}")]
    MarginTooLarge { margin: usize, min_side: usize },

    #[error("rectangle {rect:?} does not fit in a {width}x{height} image")]
    OutOfBounds { rect: Rect, width: usize, height: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("AR normal equations are singular in window {window:?}")]
    SingularSystem { window: Rect },

    #[error("window has {available} usable equations, at least {required} needed")]
    InsufficientEquations { available: usize, required: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
