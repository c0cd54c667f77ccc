use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing view (v={v}, u={u}) at {}", path.display())]
    MissingView { v: usize, u: usize, path: PathBuf },

    #[error("inconsistent view dimensions in {scene}: {detail}")]
    InconsistentViews { scene: String, detail: String },

    #[error("target (u={u}, v={v}) is a corner view; corners are inputs")]
    CornerTarget { u: usize, v: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Data problems (bad inputs on disk, malformed layouts) as opposed to
    /// usage or numeric failures.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingView { .. }
                | Error::InconsistentViews { .. }
                | Error::Io { .. }
                | Error::Image { .. }
                | Error::Checkpoint(_)
        )
    }
}
