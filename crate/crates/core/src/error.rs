use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the tomography library.
#[derive(Debug, Error)]
pub enum QstError {
    #[error("invalid state: Bloch vector norm {norm} exceeds 1")]
    InvalidState { norm: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("replay miss: {0}")]
    ReplayMiss(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate posterior: every particle has zero likelihood")]
    DegeneratePosterior,

    #[error("shot grids do not align: {0}")]
    MisalignedGrid(String),

    #[error("{failed} of {total} trials failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = QstError> = std::result::Result<T, E>;
