use thiserror::Error;

use crate::grid::Grid;

/// Location of the first non-finite value found in a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLocation {
    pub node: [usize; 3],
    pub component: usize,
}

impl std::fmt::Display for NodeLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "node ({}, {}, {}) component {}",
            self.node[0], self.node[1], self.node[2], self.component
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: Grid, right: Grid },
    #[error("non-finite value in {field} at {at}")]
    NonFinite { field: &'static str, at: NodeLocation },
    #[error("raster length {got} does not match grid ({expected} expected)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unsupported norm exponent p = {0}")]
    UnsupportedExponent(f64),
    #[error("nonpositive density {value} at {at} (vacuum breach)")]
    Vacuum { value: f64, at: NodeLocation },
    #[error("director has zero length at {0}")]
    DegenerateDirector(NodeLocation),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("unknown field kind tag {0}")]
    KindTag(u32),
    #[error("expected {expected} field, found {found}")]
    WrongKind { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
