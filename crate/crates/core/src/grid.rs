//! Periodic structured grids on a 3-torus.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::FieldError;

/// Smallest number of nodes per axis; below this the stencils wrap onto themselves.
pub const MIN_DIM: usize = 4;

/// A periodic box `[0, L1) x [0, L2) x [0, L3)` sampled at `N1 x N2 x N3` nodes.
///
/// Node `(i, j, k)` sits at `(i h1, j h2, k h3)` and is stored at linear index
/// `(i N2 + j) N3 + k` (C order, last axis fastest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    lengths: [f64; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], lengths: [f64; 3]) -> Result<Self, FieldError> {
        if let Some(n) = dims.iter().find(|&&n| n < MIN_DIM) {
            return Err(FieldError::InvalidGrid(format!(
                "every dimension must be at least {MIN_DIM}, got {n}"
            )));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(FieldError::InvalidGrid(format!(
                "box lengths must be finite and positive, got {l}"
            )));
        }
        Ok(Self { dims, lengths })
    }

    /// Cube of `n^3` nodes with side `2 pi`.
    pub fn cube(n: usize) -> Result<Self, FieldError> {
        Self::new([n; 3], [2.0 * PI; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.lengths[0] / self.dims[0] as f64,
            self.lengths[1] / self.dims[1] as f64,
            self.lengths[2] / self.dims[2] as f64,
        ]
    }

    pub fn min_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].min(h[1]).min(h[2])
    }

    pub fn cell_volume(&self) -> f64 {
        let h = self.spacing();
        h[0] * h[1] * h[2]
    }

    pub fn volume(&self) -> f64 {
        self.lengths[0] * self.lengths[1] * self.lengths[2]
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let ij = idx / self.dims[2];
        [ij / self.dims[1], ij % self.dims[1], k]
    }

    /// Coordinates of node `idx`.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let n = self.unravel(idx);
        let h = self.spacing();
        [n[0] as f64 * h[0], n[1] as f64 * h[1], n[2] as f64 * h[2]]
    }

    /// Fundamental wavenumber `2 pi / L` along `axis`.
    pub fn base_wavenumber(&self, axis: usize) -> f64 {
        2.0 * PI / self.lengths[axis]
    }

    /// Same node counts, every box length divided by `factor`.
    pub fn shrunk(&self, factor: f64) -> Result<Self, FieldError> {
        Self::new(self.dims, self.lengths.map(|l| l / factor))
    }

    pub fn with_dims(&self, dims: [usize; 3]) -> Result<Self, FieldError> {
        Self::new(dims, self.lengths)
    }
}

/// Discretisation used for every derivative in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CalculusMode {
    /// Fourier pseudo-spectral derivatives with 2/3-rule truncation.
    #[default]
    Spectral,
    /// Second-order centred finite differences.
    FiniteDifference,
}

impl fmt::Display for CalculusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalculusMode::Spectral => "spectral",
            CalculusMode::FiniteDifference => "fd",
        })
    }
}

impl FromStr for CalculusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spectral" => Ok(CalculusMode::Spectral),
            "fd" | "finite_difference" => Ok(CalculusMode::FiniteDifference),
            other => Err(format!("unknown calculus mode `{other}` (spectral | fd)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(Grid::new([3, 8, 8], [1.0; 3]).is_err());
        assert!(Grid::new([8, 8, 8], [1.0, 0.0, 1.0]).is_err());
        assert!(Grid::new([8, 8, 8], [1.0, f64::NAN, 1.0]).is_err());
        assert!(Grid::new([4, 4, 4], [1.0; 3]).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new([4, 5, 6], [1.0, 2.0, 3.0]).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.unravel(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
        assert_eq!(g.len(), 120);
        assert!((g.volume() - 6.0).abs() < 1e-15);
        assert!((g.cell_volume() * g.len() as f64 - g.volume()).abs() < 1e-14);
    }
}
