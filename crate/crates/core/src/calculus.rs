//! Discrete differential operators on periodic grids.
//!
//! A [`Calculus`] fixes the grid and the [`CalculusMode`] for a whole run. In
//! spectral mode every derivative acts on the 2/3-truncated spectrum, so the
//! outputs are band-limited; in finite-difference mode the operators are the
//! standard second-order centred stencils (compact three-point Laplacian).

use num_complex::Complex64;

use crate::error::FieldError;
use crate::fft::SpectralTransform;
use crate::field::{same_grid, Field, ScalarField, TensorField, VectorField};
use crate::grid::{CalculusMode, Grid};

/// A raster prepared for repeated differentiation.
pub(crate) enum Prepared<'a> {
    Fourier(Vec<Complex64>),
    Nodal(&'a [f64]),
}

#[derive(Debug)]
pub struct Calculus {
    grid: Grid,
    mode: CalculusMode,
    spectral: Option<SpectralTransform>,
}

impl Calculus {
    pub fn new(grid: Grid, mode: CalculusMode) -> Self {
        let spectral = match mode {
            CalculusMode::Spectral => Some(SpectralTransform::new(&grid)),
            CalculusMode::FiniteDifference => None,
        };
        Self {
            grid,
            mode,
            spectral,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> CalculusMode {
        self.mode
    }

    fn check(&self, f: &impl Field, name: &'static str) -> Result<(), FieldError> {
        same_grid(&self.grid, f.grid())?;
        f.ensure_finite(name)
    }

    // ---- raw slice kernels -------------------------------------------------

    pub(crate) fn prepare<'a>(&self, data: &'a [f64]) -> Prepared<'a> {
        match &self.spectral {
            Some(t) => Prepared::Fourier(t.forward(data)),
            None => Prepared::Nodal(data),
        }
    }

    fn apply_symbol(&self, spec: &[Complex64], symbol: impl Fn([f64; 3]) -> Complex64) -> Vec<f64> {
        let t = self.spectral.as_ref().expect("spectral mode");
        let mut out = vec![Complex64::new(0.0, 0.0); spec.len()];
        t.for_each_mode(|idx, k, keep| {
            if keep {
                out[idx] = spec[idx] * symbol(k);
            }
        });
        t.inverse(out)
    }

    /// First derivative along `axis`.
    pub(crate) fn d1(&self, p: &Prepared, axis: usize) -> Vec<f64> {
        match p {
            Prepared::Fourier(s) => self.apply_symbol(s, |k| Complex64::new(0.0, k[axis])),
            Prepared::Nodal(f) => self.fd_d1(f, axis),
        }
    }

    /// Second derivative along `a` then `b`.
    pub(crate) fn d2(&self, p: &Prepared, a: usize, b: usize) -> Vec<f64> {
        match p {
            Prepared::Fourier(s) => self.apply_symbol(s, |k| Complex64::new(-k[a] * k[b], 0.0)),
            Prepared::Nodal(f) if a == b => self.fd_d2(f, a),
            Prepared::Nodal(f) => self.fd_d1(&self.fd_d1(f, a), b),
        }
    }

    /// Mixed derivative `d1^a d2^b d3^c` for `orders = [a, b, c]`.
    pub(crate) fn d_multi(&self, p: &Prepared, orders: [u32; 3]) -> Vec<f64> {
        match p {
            Prepared::Fourier(s) => self.apply_symbol(s, |k| {
                let mut z = Complex64::new(1.0, 0.0);
                for (axis, &o) in orders.iter().enumerate() {
                    for _ in 0..o {
                        z *= Complex64::new(0.0, k[axis]);
                    }
                }
                z
            }),
            Prepared::Nodal(f) => {
                let mut out = f.to_vec();
                for (axis, &o) in orders.iter().enumerate() {
                    for _ in 0..o / 2 {
                        out = self.fd_d2(&out, axis);
                    }
                    if o % 2 == 1 {
                        out = self.fd_d1(&out, axis);
                    }
                }
                out
            }
        }
    }

    pub(crate) fn lap(&self, p: &Prepared) -> Vec<f64> {
        match p {
            Prepared::Fourier(s) => {
                self.apply_symbol(s, |k| Complex64::new(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0))
            }
            Prepared::Nodal(f) => {
                let mut out = self.fd_d2(f, 0);
                for axis in 1..3 {
                    for (o, v) in out.iter_mut().zip(self.fd_d2(f, axis)) {
                        *o += v;
                    }
                }
                out
            }
        }
    }

    /// `sum_a d_a f_a` from three rasters, sharing one inverse transform in
    /// spectral mode.
    pub(crate) fn div_raw(&self, comps: [&[f64]; 3]) -> Vec<f64> {
        match &self.spectral {
            Some(t) => {
                let specs = comps.map(|c| t.forward(c));
                let mut out = vec![Complex64::new(0.0, 0.0); t.spectrum_len()];
                t.for_each_mode(|idx, k, keep| {
                    if keep {
                        let s = specs[0][idx] * k[0] + specs[1][idx] * k[1] + specs[2][idx] * k[2];
                        out[idx] = Complex64::new(-s.im, s.re);
                    }
                });
                t.inverse(out)
            }
            None => {
                let mut out = self.fd_d1(comps[0], 0);
                for axis in 1..3 {
                    for (o, v) in out.iter_mut().zip(self.fd_d1(comps[axis], axis)) {
                        *o += v;
                    }
                }
                out
            }
        }
    }

    /// Row-wise divergence `(div T)_i = sum_j d_j T_ij` of a symmetric tensor given
    /// by its six upper entries `[xx, xy, xz, yy, yz, zz]`.
    pub(crate) fn div_symmetric_raw(&self, upper: [&[f64]; 6]) -> [Vec<f64>; 3] {
        const ROWS: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        match &self.spectral {
            Some(t) => {
                let specs: Vec<Vec<Complex64>> = upper.iter().map(|c| t.forward(c)).collect();
                ROWS.map(|row| {
                    let mut out = vec![Complex64::new(0.0, 0.0); t.spectrum_len()];
                    t.for_each_mode(|idx, k, keep| {
                        if keep {
                            let s = specs[row[0]][idx] * k[0]
                                + specs[row[1]][idx] * k[1]
                                + specs[row[2]][idx] * k[2];
                            out[idx] = Complex64::new(-s.im, s.re);
                        }
                    });
                    t.inverse(out)
                })
            }
            None => ROWS.map(|row| self.div_raw([upper[row[0]], upper[row[1]], upper[row[2]]])),
        }
    }

    /// 2/3-rule projection in spectral mode; identity in finite-difference mode.
    pub(crate) fn dealias_raw(&self, data: Vec<f64>) -> Vec<f64> {
        match &self.spectral {
            Some(t) => {
                let mut spec = t.forward(&data);
                t.for_each_mode(|idx, _, keep| {
                    if !keep {
                        spec[idx] = Complex64::new(0.0, 0.0);
                    }
                });
                t.inverse(spec)
            }
            None => data,
        }
    }

    fn fd_d1(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let h = self.grid.spacing()[axis];
        let inv = 1.0 / (2.0 * h);
        self.fd_stencil(f, axis, |minus, _, plus| (plus - minus) * inv)
    }

    fn fd_d2(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let h = self.grid.spacing()[axis];
        let inv = 1.0 / (h * h);
        self.fd_stencil(f, axis, |minus, mid, plus| (plus - 2.0 * mid + minus) * inv)
    }

    fn fd_stencil(&self, f: &[f64], axis: usize, op: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        let [n1, n2, n3] = self.grid.dims();
        let stride = [n2 * n3, n3, 1][axis];
        let len = [n1, n2, n3][axis];
        let mut out = vec![0.0; f.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let pos = (idx / stride) % len;
            let base = idx - pos * stride;
            let minus = base + ((pos + len - 1) % len) * stride;
            let plus = base + ((pos + 1) % len) * stride;
            *o = op(f[minus], f[idx], f[plus]);
        }
        out
    }

    // ---- public field operators --------------------------------------------

    pub fn gradient(&self, f: &ScalarField) -> Result<VectorField, FieldError> {
        self.check(f, "gradient input")?;
        let p = self.prepare(f.data());
        VectorField::from_components(self.grid, std::array::from_fn(|a| self.d1(&p, a)))
    }

    /// Jacobian `J_ij = d_j v_i`.
    pub fn jacobian(&self, v: &VectorField) -> Result<TensorField, FieldError> {
        self.check(v, "jacobian input")?;
        Ok(self.jacobian_unchecked(v))
    }

    pub(crate) fn jacobian_unchecked(&self, v: &VectorField) -> TensorField {
        let mut out = TensorField::zeros(self.grid);
        for i in 0..3 {
            let p = self.prepare(v.component(i));
            for j in 0..3 {
                out.entry_mut(i, j).copy_from_slice(&self.d1(&p, j));
            }
        }
        out
    }

    pub fn divergence(&self, v: &VectorField) -> Result<ScalarField, FieldError> {
        self.check(v, "divergence input")?;
        let c = v.comps();
        ScalarField::from_vec(self.grid, self.div_raw([&c[0], &c[1], &c[2]]))
    }

    /// Row-wise divergence of a tensor field.
    pub fn tensor_divergence(&self, t: &TensorField) -> Result<VectorField, FieldError> {
        self.check(t, "tensor divergence input")?;
        let comps = std::array::from_fn(|i| self.div_raw([t.entry(i, 0), t.entry(i, 1), t.entry(i, 2)]));
        VectorField::from_components(self.grid, comps)
    }

    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField, FieldError> {
        self.check(f, "laplacian input")?;
        ScalarField::from_vec(self.grid, self.lap(&self.prepare(f.data())))
    }

    /// Componentwise Laplacian; also used for directors (the result is not unit).
    pub fn vector_laplacian(&self, v: &VectorField) -> Result<VectorField, FieldError> {
        self.check(v, "laplacian input")?;
        let comps = std::array::from_fn(|c| self.lap(&self.prepare(v.component(c))));
        VectorField::from_components(self.grid, comps)
    }

    pub fn curl(&self, v: &VectorField) -> Result<VectorField, FieldError> {
        self.check(v, "curl input")?;
        let p: Vec<Prepared> = (0..3).map(|c| self.prepare(v.component(c))).collect();
        let comps = std::array::from_fn(|i| {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let a = self.d1(&p[k], j);
            let b = self.d1(&p[j], k);
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        });
        VectorField::from_components(self.grid, comps)
    }

    /// Symmetric gradient `(grad u + grad u^T) / 2`.
    pub fn deformation_tensor(&self, u: &VectorField) -> Result<TensorField, FieldError> {
        Ok(symmetric_part(&self.jacobian(u)?))
    }

    /// Full Hessian of a scalar field.
    pub fn hessian(&self, f: &ScalarField) -> Result<TensorField, FieldError> {
        self.check(f, "hessian input")?;
        let p = self.prepare(f.data());
        let mut out = TensorField::zeros(self.grid);
        for i in 0..3 {
            for j in i..3 {
                let v = self.d2(&p, i, j);
                if i != j {
                    out.entry_mut(j, i).copy_from_slice(&v);
                }
                out.entry_mut(i, j).copy_from_slice(&v);
            }
        }
        Ok(out)
    }

    /// `|| grad^2 v ||_{L^2}^2` summed over the components of `v`.
    pub fn hessian_sq_norm(&self, v: &VectorField) -> Result<f64, FieldError> {
        self.check(v, "hessian input")?;
        let mut total = 0.0;
        for c in 0..3 {
            let p = self.prepare(v.component(c));
            for i in 0..3 {
                for j in i..3 {
                    let w = if i == j { 1.0 } else { 2.0 };
                    let d = self.d2(&p, i, j);
                    total += w * crate::norms::pairwise_sum_map(&d, |x| x * x);
                }
            }
        }
        Ok(total * self.grid.cell_volume())
    }

    /// 2/3-rule projection of a scalar field (identity in FD mode).
    pub fn dealias(&self, f: &ScalarField) -> Result<ScalarField, FieldError> {
        self.check(f, "dealias input")?;
        ScalarField::from_vec(self.grid, self.dealias_raw(f.data().to_vec()))
    }
}

pub fn symmetric_part(t: &TensorField) -> TensorField {
    let mut out = TensorField::zeros(*t.grid());
    for i in 0..3 {
        for j in 0..3 {
            let v: Vec<f64> = t
                .entry(i, j)
                .iter()
                .zip(t.entry(j, i))
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            out.entry_mut(i, j).copy_from_slice(&v);
        }
    }
    out
}
