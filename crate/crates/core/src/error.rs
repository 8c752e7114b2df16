use std::path::PathBuf;

/// Errors produced by the localization library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("node index {index} out of range for tree with {n} nodes")]
    NodeIndex { index: usize, n: usize },

    #[error("alpha {alpha} outside the valid range (0, {max}) for this tree")]
    InvalidAlpha { alpha: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty image")]
    EmptyImage,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("likelihood has no positive mass")]
    ZeroMass,

    #[error("likelihood file: {0}")]
    LikelihoodFormat(String),

    #[error("invalid centroid model: {0}")]
    CentroidModel(String),

    #[error("ellipse at ({cx}, {cy}) with axes ({ax}, {ay}) leaves the {width}x{height} frame")]
    EllipseOutOfBounds {
        cx: f64,
        cy: f64,
        ax: f64,
        ay: f64,
        width: usize,
        height: usize,
    },

    #[error("invalid walk: {0}")]
    InvalidWalk(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("no frames found in {}", .0.display())]
    NoFrames(PathBuf),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec failed on {}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
