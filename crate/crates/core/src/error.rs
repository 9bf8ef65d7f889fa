use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("splat lies behind the camera (camera-frame z = {z})")]
    BehindCamera { z: f64 },
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("scene has no splats")]
    EmptyScene,
    #[error("no views supplied")]
    NoViews,
    #[error("no observations supplied")]
    NoObservations,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("task is already solved")]
    AlreadySolved,
    #[error("set is empty")]
    EmptySet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("query point set is empty")]
    EmptyQuerySet,
    #[error("no valid actions can be sampled: {0}")]
    NoValidActions(String),
    #[error("missing frames under {0}")]
    MissingFrames(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
