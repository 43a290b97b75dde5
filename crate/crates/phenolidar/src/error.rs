use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pose rotation is not a unit quaternion (norm deviates by {0:.3e})")]
    InvalidPose(f64),

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("input is empty")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("no ground plane found: best consensus {best} is below the minimum {min}")]
    NoGroundFound { best: usize, min: usize },

    #[error("plane fit is ambiguous (degenerate covariance)")]
    AmbiguousPlane,

    #[error("plot has no height samples")]
    DegeneratePlot,

    #[error("point ({x:.3}, {y:.3}) lies outside the terrain")]
    OutOfTerrain { x: f64, y: f64 },

    #[error("invalid farm spec: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed PLY: {msg}")]
    PlyParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(
        "plot ids do not pair up: {} estimate plot(s) missing from truth {missing_from_truth:?}, \
         {} truth plot(s) missing from estimates {missing_from_estimates:?}",
        missing_from_truth.len(),
        missing_from_estimates.len()
    )]
    PlotPairing {
        missing_from_truth: Vec<(usize, usize)>,
        missing_from_estimates: Vec<(usize, usize)>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
