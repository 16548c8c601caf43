use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("grid mismatch between fields")]
    GridMismatch,

    #[error("non-finite value at time index {time}, space index {space}")]
    NonFinite { time: usize, space: usize },

    #[error("trusted region is empty at time index {0}")]
    EmptyTrustedRegion(usize),

    #[error("trusted region is disconnected at time index {0}; densities with interior zeros are not supported")]
    DisconnectedTrustedRegion(usize),

    #[error("no spatial node is trusted at every time slice; cannot anchor the phase")]
    NoCommonTrustedNode,

    #[error("reference node {index} lies outside the trusted region at time index {time}")]
    ReferenceOutsideTrusted { index: usize, time: usize },

    #[error("normalization drift {drift:.3e} exceeds {limit:.1e}")]
    NormDrift { drift: f64, limit: f64 },

    #[error("family incompatible on this grid: every start produced a degenerate density")]
    FamilyIncompatible,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
