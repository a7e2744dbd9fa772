//! Scalar, vector, tensor and director rasters on a [`Grid`].
//!
//! Multi-component fields are stored component-major (one contiguous raster per
//! component) so that transforms run on contiguous memory; the snapshot format
//! interleaves them on write.

use crate::error::{FieldError, NodeLocation};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar = 0,
    Vector = 1,
    Tensor = 2,
    Director = 3,
}

impl FieldKind {
    pub fn components(self) -> usize {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector | FieldKind::Director => 3,
            FieldKind::Tensor => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Scalar => "scalar",
            FieldKind::Vector => "vector",
            FieldKind::Tensor => "tensor",
            FieldKind::Director => "director",
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(FieldKind::Scalar),
            1 => Some(FieldKind::Vector),
            2 => Some(FieldKind::Tensor),
            3 => Some(FieldKind::Director),
            _ => None,
        }
    }
}

/// Common read access used by norms, finiteness checks and snapshots.
pub trait Field {
    fn grid(&self) -> &Grid;
    fn kind(&self) -> FieldKind;
    fn components(&self) -> Vec<&[f64]>;

    /// Euclidean (vector) or Frobenius (tensor) magnitude at one node.
    fn magnitude_at(&self, idx: usize) -> f64 {
        let comps = self.components();
        if comps.len() == 1 {
            return comps[0][idx].abs();
        }
        comps.iter().map(|c| c[idx] * c[idx]).sum::<f64>().sqrt()
    }

    fn first_nonfinite(&self) -> Option<NodeLocation> {
        let grid = *self.grid();
        for (component, c) in self.components().into_iter().enumerate() {
            if let Some(idx) = c.iter().position(|v| !v.is_finite()) {
                return Some(NodeLocation {
                    node: grid.unravel(idx),
                    component,
                });
            }
        }
        None
    }

    fn ensure_finite(&self, name: &'static str) -> Result<(), FieldError> {
        match self.first_nonfinite() {
            Some(at) => Err(FieldError::NonFinite { field: name, at }),
            None => Ok(()),
        }
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<(), FieldError> {
    if a == b {
        Ok(())
    } else {
        Err(FieldError::GridMismatch {
            left: *a,
            right: *b,
        })
    }
}

fn check_len(grid: &Grid, data: &[f64]) -> Result<(), FieldError> {
    if data.len() == grid.len() {
        Ok(())
    } else {
        Err(FieldError::LengthMismatch {
            expected: grid.len(),
            got: data.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self, FieldError> {
        check_len(&grid, &data)?;
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            data: vec![value; grid.len()],
            grid,
        }
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, data }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }
}

impl Field for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn kind(&self) -> FieldKind {
        FieldKind::Scalar
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn from_components(grid: Grid, comps: [Vec<f64>; 3]) -> Result<Self, FieldError> {
        for c in &comps {
            check_len(&grid, c)?;
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, [0.0; 3])
    }

    pub fn constant(grid: Grid, value: [f64; 3]) -> Self {
        Self {
            comps: value.map(|v| vec![v; grid.len()]),
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut comps: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(grid.len()));
        for i in 0..grid.len() {
            let v = f(grid.position(i));
            for (c, x) in comps.iter_mut().zip(v) {
                c.push(x);
            }
        }
        Self { grid, comps }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn comps(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.comps
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            comps: self.comps.clone().map(|v| v.into_iter().map(|x| c * x).collect()),
        }
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: (0..self.grid.len()).map(|i| self.magnitude_at(i)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        same_grid(&self.grid, &other.grid)?;
        let comps = std::array::from_fn(|c| {
            self.comps[c]
                .iter()
                .zip(&other.comps[c])
                .map(|(a, b)| a - b)
                .collect()
        });
        Ok(Self {
            grid: self.grid,
            comps,
        })
    }
}

impl Field for VectorField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn kind(&self) -> FieldKind {
        FieldKind::Vector
    }
    fn components(&self) -> Vec<&[f64]> {
        self.comps.iter().map(|c| c.as_slice()).collect()
    }
}

/// 3x3 tensor field; entry `(i, j)` is component `3 i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    comps: [Vec<f64>; 9],
}

impl TensorField {
    pub fn from_components(grid: Grid, comps: [Vec<f64>; 9]) -> Result<Self, FieldError> {
        for c in &comps {
            check_len(&grid, c)?;
        }
        Ok(Self { grid, comps })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
            grid,
        }
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[3 * i + j]
    }

    #[inline]
    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        &mut self.comps[3 * i + j]
    }

    pub fn comps(&self) -> &[Vec<f64>; 9] {
        &self.comps
    }

    pub fn transpose(&self) -> Self {
        Self {
            grid: self.grid,
            comps: std::array::from_fn(|c| self.comps[3 * (c % 3) + c / 3].clone()),
        }
    }

    pub fn trace(&self) -> ScalarField {
        let data = (0..self.grid.len())
            .map(|n| self.comps[0][n] + self.comps[4][n] + self.comps[8][n])
            .collect();
        ScalarField {
            grid: self.grid,
            data,
        }
    }

    /// Largest `|T_ij - T_ji|` over all nodes.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for (a, b) in self.entry(i, j).iter().zip(self.entry(j, i)) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        same_grid(&self.grid, &other.grid)?;
        let comps = std::array::from_fn(|c| {
            self.comps[c]
                .iter()
                .zip(&other.comps[c])
                .map(|(a, b)| a - b)
                .collect()
        });
        Ok(Self {
            grid: self.grid,
            comps,
        })
    }
}

impl Field for TensorField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn kind(&self) -> FieldKind {
        FieldKind::Tensor
    }
    fn components(&self) -> Vec<&[f64]> {
        self.comps.iter().map(|c| c.as_slice()).collect()
    }
}

/// Unit-sphere-valued vector field.
///
/// Construction always renormalises pointwise, so `| |d| - 1 |` is at roundoff
/// level for every value of this type.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectorField {
    inner: VectorField,
}

impl DirectorField {
    /// Projects `v` onto the sphere node by node.
    pub fn normalized(v: VectorField) -> Result<Self, FieldError> {
        let mut v = v;
        project_to_sphere(&mut v)?;
        Ok(Self { inner: v })
    }

    /// Keeps already-unit data bit for bit; anything off the sphere by more than
    /// `1e-12` is renormalised.
    pub(crate) fn from_stored(v: VectorField) -> Self {
        if unit_defect(&v) <= 1e-12 {
            Self { inner: v }
        } else {
            let mut v = v;
            let _ = project_to_sphere(&mut v);
            Self { inner: v }
        }
    }

    pub fn uniform(grid: Grid, e: [f64; 3]) -> Result<Self, FieldError> {
        Self::normalized(VectorField::constant(grid, e))
    }

    pub fn as_vector(&self) -> &VectorField {
        &self.inner
    }

    pub fn into_vector(self) -> VectorField {
        self.inner
    }

    /// Largest pointwise `| |d| - 1 |`.
    pub fn unit_defect(&self) -> f64 {
        unit_defect(&self.inner)
    }
}

impl Field for DirectorField {
    fn grid(&self) -> &Grid {
        &self.inner.grid
    }
    fn kind(&self) -> FieldKind {
        FieldKind::Director
    }
    fn components(&self) -> Vec<&[f64]> {
        self.inner.components()
    }
}

pub fn unit_defect(v: &VectorField) -> f64 {
    (0..v.grid.len())
        .map(|i| (v.magnitude_at(i) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `v <- v / |v|` pointwise; returns the largest correction `| |v| - 1 |` applied.
pub fn project_to_sphere(v: &mut VectorField) -> Result<f64, FieldError> {
    let grid = v.grid;
    let mut worst = 0.0f64;
    let [a, b, c] = &mut v.comps;
    for n in 0..grid.len() {
        let norm = (a[n] * a[n] + b[n] * b[n] + c[n] * c[n]).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            let at = NodeLocation {
                node: grid.unravel(n),
                component: 0,
            };
            return Err(if norm.is_finite() {
                FieldError::DegenerateDirector(at)
            } else {
                FieldError::NonFinite {
                    field: "director",
                    at,
                }
            });
        }
        worst = worst.max((norm - 1.0).abs());
        a[n] /= norm;
        b[n] /= norm;
        c[n] /= norm;
    }
    Ok(worst)
}

/// Pointwise `a . b`.
pub fn dot_field(a: &VectorField, b: &VectorField) -> Result<ScalarField, FieldError> {
    same_grid(&a.grid, &b.grid)?;
    let data = (0..a.grid.len())
        .map(|n| (0..3).map(|c| a.comps[c][n] * b.comps[c][n]).sum())
        .collect();
    Ok(ScalarField { grid: a.grid, data })
}

/// `(grad d (.) grad d)_ij = d_i d . d_j d` from a Jacobian `J_ab = d_b v_a`.
pub fn outer_contract(jacobian: &TensorField) -> TensorField {
    let grid = jacobian.grid;
    let mut out = TensorField::zeros(grid);
    for i in 0..3 {
        for j in i..3 {
            let vals: Vec<f64> = (0..grid.len())
                .map(|n| (0..3).map(|k| jacobian.comps[3 * k + i][n] * jacobian.comps[3 * k + j][n]).sum())
                .collect();
            if i != j {
                out.comps[3 * j + i] = vals.clone();
            }
            out.comps[3 * i + j] = vals;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::cube(4).unwrap()
    }

    #[test]
    fn nonfinite_is_located() {
        let mut f = VectorField::zeros(grid());
        f.component_mut(2)[grid().index(1, 2, 3)] = f64::NAN;
        let at = f.first_nonfinite().unwrap();
        assert_eq!(at.node, [1, 2, 3]);
        assert_eq!(at.component, 2);
        assert!(f.ensure_finite("u").is_err());
    }

    #[test]
    fn projection_gives_unit_vectors() {
        let v = VectorField::from_fn(grid(), |x| [1.0 + x[0], x[1] - 0.3, 2.0]);
        let d = DirectorField::normalized(v).unwrap();
        assert!(d.unit_defect() <= 1e-15);
    }

    #[test]
    fn zero_vector_cannot_be_projected() {
        assert!(matches!(
            DirectorField::normalized(VectorField::zeros(grid())),
            Err(FieldError::DegenerateDirector(_))
        ));
    }

    #[test]
    fn dot_field_rejects_mismatched_grids() {
        let a = VectorField::zeros(grid());
        let b = VectorField::zeros(Grid::cube(5).unwrap());
        assert!(matches!(dot_field(&a, &b), Err(FieldError::GridMismatch { .. })));
    }
}
