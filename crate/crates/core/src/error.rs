use thiserror::Error;

use crate::io::container::ContainerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("track {index}: {reason}")]
    TrackOutOfBounds { index: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Doppler compensation has already been applied")]
    AlreadyCompensated,

    #[error("operation requires stage {expected}, cube is at stage {found}")]
    WrongStage {
        expected: &'static str,
        found: &'static str,
    },

    #[error("CFAR window of {window} cells does not fit a {rows}x{cols} map")]
    CfarWindow {
        window: usize,
        rows: usize,
        cols: usize,
    },

    #[error("no target detected in frame {frame}")]
    NoTarget { frame: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("cell (range {range}, angle {angle}): {source}")]
    Cell {
        range: usize,
        angle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold} diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        fold: usize,
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input (configuration, arguments,
    /// malformed files) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::TrackOutOfBounds { .. }
            | Error::Shape(_)
            | Error::InvalidArgument(_)
            | Error::CfarWindow { .. }
            | Error::Parse { .. }
            | Error::Container(_) => true,
            Error::Cell { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
