//! Real-to-complex 3-D FFT on a periodic grid.
//!
//! The half spectrum is stored as `[n1][n2][n3 / 2 + 1]`, C order. The inverse
//! includes the `1 / (n1 n2 n3)` normalisation.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

pub struct SpectralTransform {
    dims: [usize; 3],
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    /// Angular wavenumbers per axis, indexed by storage position.
    wavenumbers: [Vec<f64>; 3],
    /// 2/3-rule mask per axis: `3 |n| < N`.
    retained: [Vec<bool>; 3],
}

impl std::fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform").field("dims", &self.dims).finish()
    }
}

fn signed_mode(n: usize, len: usize) -> i64 {
    if n <= len / 2 {
        n as i64
    } else {
        n as i64 - len as i64
    }
}

impl SpectralTransform {
    pub fn new(grid: &Grid) -> Self {
        let dims = grid.dims();
        let half = dims[2] / 2 + 1;
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::<f64>::new();
        let axis_modes = |axis: usize| -> Vec<i64> {
            let len = if axis == 2 { half } else { dims[axis] };
            (0..len).map(|n| signed_mode(n, dims[axis])).collect()
        };
        let wavenumbers = std::array::from_fn(|a| {
            let k0 = grid.base_wavenumber(a);
            axis_modes(a).into_iter().map(|m| k0 * m as f64).collect()
        });
        let retained = std::array::from_fn(|a| {
            axis_modes(a)
                .into_iter()
                .map(|m| 3 * m.unsigned_abs() < dims[a] as u64)
                .collect()
        });
        Self {
            dims,
            half,
            r2c: real.plan_fft_forward(dims[2]),
            c2r: real.plan_fft_inverse(dims[2]),
            fwd: [cplx.plan_fft_forward(dims[0]), cplx.plan_fft_forward(dims[1])],
            inv: [cplx.plan_fft_inverse(dims[0]), cplx.plan_fft_inverse(dims[1])],
            wavenumbers,
            retained,
        }
    }

    pub fn spectrum_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.half
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    pub fn retained(&self, axis: usize) -> &[bool] {
        &self.retained[axis]
    }

    /// Visits every spectral coefficient with its storage index and wavevector;
    /// `keep` is false for modes removed by the 2/3 rule.
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3], bool)) {
        let [n1, n2, _] = self.dims;
        let mut idx = 0;
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..self.half {
                    let keep = self.retained[0][i] && self.retained[1][j] && self.retained[2][k];
                    f(
                        idx,
                        [self.wavenumbers[0][i], self.wavenumbers[1][j], self.wavenumbers[2][k]],
                        keep,
                    );
                    idx += 1;
                }
            }
        }
    }

    pub fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let [n1, n2, n3] = self.dims;
        let m3 = self.half;
        let mut out = vec![Complex64::new(0.0, 0.0); n1 * n2 * m3];
        let mut line = self.r2c.make_input_vec();
        let mut scratch = self.r2c.make_scratch_vec();
        for (src, dst) in data.chunks_exact(n3).zip(out.chunks_exact_mut(m3)) {
            line.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut line, dst, &mut scratch)
                .expect("r2c lengths are fixed at planning time");
        }
        self.complex_passes(&mut out, &self.fwd);
        out
    }

    /// Consumes a half spectrum and returns the real field.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let [n1, n2, n3] = self.dims;
        let m3 = self.half;
        self.complex_passes(&mut spec, &self.inv);
        let scale = 1.0 / (n1 * n2 * n3) as f64;
        let mut out = vec![0.0; n1 * n2 * n3];
        let mut scratch = self.c2r.make_scratch_vec();
        for (src, dst) in spec.chunks_exact_mut(m3).zip(out.chunks_exact_mut(n3)) {
            // c2r needs exactly real DC (and Nyquist for even n3) coefficients.
            src[0].im = 0.0;
            if n3 % 2 == 0 {
                src[m3 - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(src, dst, &mut scratch)
                .expect("c2r lengths are fixed at planning time");
        }
        for v in &mut out {
            *v *= scale;
        }
        out
    }

    /// Applies the axis-1 and axis-0 complex transforms in place.
    fn complex_passes(&self, spec: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [n1, n2, _] = self.dims;
        let m3 = self.half;
        // Axis 1: for each i, gather the m3 lines of length n2.
        let mut buf = vec![Complex64::new(0.0, 0.0); n2 * m3];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plans[1].get_inplace_scratch_len()];
        for i in 0..n1 {
            let slab = &mut spec[i * n2 * m3..(i + 1) * n2 * m3];
            for j in 0..n2 {
                for k in 0..m3 {
                    buf[k * n2 + j] = slab[j * m3 + k];
                }
            }
            plans[1].process_with_scratch(&mut buf, &mut scratch);
            for j in 0..n2 {
                for k in 0..m3 {
                    slab[j * m3 + k] = buf[k * n2 + j];
                }
            }
        }
        // Axis 0: for each j, gather the m3 lines of length n1.
        let mut buf = vec![Complex64::new(0.0, 0.0); n1 * m3];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plans[0].get_inplace_scratch_len()];
        for j in 0..n2 {
            for i in 0..n1 {
                let row = &spec[(i * n2 + j) * m3..(i * n2 + j + 1) * m3];
                for k in 0..m3 {
                    buf[k * n1 + i] = row[k];
                }
            }
            plans[0].process_with_scratch(&mut buf, &mut scratch);
            for i in 0..n1 {
                let row = &mut spec[(i * n2 + j) * m3..(i * n2 + j + 1) * m3];
                for k in 0..m3 {
                    row[k] = buf[k * n1 + i];
                }
            }
        }
    }
}
