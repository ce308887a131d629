use std::io;

use crate::Superquadric;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("index {index:?} out of range for grid dims {dims:?}")]
    OutOfRange { index: [usize; 3], dims: [usize; 3] },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid primitive: {0}")]
    Validation(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("mesh is not watertight: ray parity disagrees on {fraction:.4} of voxels")]
    NotWatertight { fraction: f64 },

    #[error("empty set: {0}")]
    Empty(String),

    #[error("cannot initialize primitive: {0}")]
    Initialization(String),

    #[error("solver diverged: {message}")]
    Solver {
        message: String,
        last_valid: Box<Superquadric>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
