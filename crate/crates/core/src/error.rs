use thiserror::Error;

/// Errors raised by the estimation, thresholding and simulation routines.
#[derive(Debug, Error)]
pub enum CamtError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate covariate: {0}")]
    DegenerateCovariate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("oracle truth is required for the LFDR procedure")]
    MissingTruth,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Table(#[from] crate::table::TableError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CamtError {
    /// Whether the error stems from bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            CamtError::Table(e) => !matches!(e, crate::table::TableError::Io(_)),
            CamtError::Numerical(_) | CamtError::Io(_) => false,
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, CamtError>;
