use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HmatError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel evaluated at coincident points {0} and {1} without a self-block rule")]
    CoincidentPoints(usize, usize),

    #[error("traction kernel requires column-side normals")]
    MissingNormals,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("partial ACA found no nonzero pivot at step {step}")]
    PivotExhaustion { step: usize },

    #[error("vector ACA found only singular 3x3 pivots; fallback required")]
    FallbackRequired,

    #[error("singular pivot block at rows {rows:?}")]
    SingularPivot { rows: Range<usize> },

    #[error("block structure is not conformal: {0}")]
    NonConformal(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("snapshot version {found} is not supported (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("snapshot checksum mismatch")]
    Checksum,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HmatError {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HmatError::PivotExhaustion { .. } | HmatError::FallbackRequired | HmatError::SingularPivot { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, HmatError>;
