use core::fmt;

use crate::index::Index;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The cell boundary crosses the interface more than once.
    MultiCutCell { cell: Index },
    /// A stencil read landed outside the allocated ghost region.
    GhostWidthTooSmall { cell: Index, depth: usize, ghost: usize },
    /// The domain cannot be split as requested.
    Decompose { reason: &'static str },
    /// Even the full 3^d block around a small cell lacks the target volume.
    NeighborhoodTooSmall { cell: Index, volume: f64, target: f64 },
    /// A small cell has no other members to borrow volume from.
    DegenerateBeta { cell: Index },
    /// Redistribution weights of a cell do not sum to one.
    WeightSumViolation { cell: Index, sum: f64 },
    /// A NaN or infinity appeared in the state.
    NonFiniteState { cell: Index, step: usize },
    /// Two grids, layouts or fields that must match do not.
    GridMismatch,
    /// Malformed grid or option values.
    InvalidInput(&'static str),
}

impl Error {
    /// Geometry problems as opposed to numerical or usage problems.
    pub fn is_geometry(&self) -> bool {
        matches!(
            self,
            Error::MultiCutCell { .. }
                | Error::NeighborhoodTooSmall { .. }
                | Error::DegenerateBeta { .. }
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MultiCutCell { cell } => {
                write!(f, "cell {cell:?} is cut more than once by the boundary")
            }
            Error::GhostWidthTooSmall { cell, depth, ghost } => write!(
                f,
                "read of cell {cell:?} at depth {depth} exceeds ghost width {ghost}"
            ),
            Error::Decompose { reason } => write!(f, "cannot decompose domain: {reason}"),
            Error::NeighborhoodTooSmall { cell, volume, target } => write!(
                f,
                "neighborhood of cell {cell:?} has volume {volume:e}, below target {target:e}"
            ),
            Error::DegenerateBeta { cell } => {
                write!(f, "small cell {cell:?} has no neighbors to merge with")
            }
            Error::WeightSumViolation { cell, sum } => {
                write!(f, "weights of cell {cell:?} sum to {sum}, expected 1")
            }
            Error::NonFiniteState { cell, step } => {
                write!(f, "non-finite value in cell {cell:?} at step {step}")
            }
            Error::GridMismatch => f.write_str("grid, layout or field shapes do not match"),
            Error::InvalidInput(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for Error {}
