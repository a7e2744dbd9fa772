//! Seeded band-limited random fields.
//!
//! A field is `Re sum_n c_n exp(i k_n . x)` over integer modes `0 < |n|_inf <= K`
//! with complex Gaussian coefficients damped by `(1 + |n|^2)^(-slope/2)`. The
//! coefficients are drawn in a fixed mode order that does not depend on the
//! grid, so the same seed gives the same continuum field at every resolution
//! that resolves it (`3K < N`). Synthesis is a separable partial DFT.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::FieldError;
use crate::grid::Grid;

/// Checks that modes up to `cutoff` survive the 2/3 truncation on `grid`.
pub fn check_cutoff(grid: &Grid, cutoff: usize) -> Result<(), FieldError> {
    let n_min = grid.dims().into_iter().min().unwrap_or(0);
    if cutoff == 0 || 3 * cutoff >= n_min {
        return Err(FieldError::InvalidGrid(format!(
            "mode cutoff {cutoff} must satisfy 1 <= K and 3K < {n_min}"
        )));
    }
    Ok(())
}

/// Raw coefficients for the modes `[-K, K]^3 \ {0}`, C order in `(n1, n2, n3)`.
fn draw_coefficients<R: Rng + ?Sized>(cutoff: usize, slope: f64, rng: &mut R) -> Vec<(f64, f64)> {
    let k = cutoff as i64;
    let w = 2 * cutoff + 1;
    let mut out = Vec::with_capacity(w * w * w);
    for n1 in -k..=k {
        for n2 in -k..=k {
            for n3 in -k..=k {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                if n1 == 0 && n2 == 0 && n3 == 0 {
                    out.push((0.0, 0.0));
                    continue;
                }
                let damp = (1.0 + (n1 * n1 + n2 * n2 + n3 * n3) as f64).powf(-0.5 * slope);
                out.push((re * damp, im * damp));
            }
        }
    }
    out
}

/// `exp(2 pi i n j / N)` for `n` in `[-K, K]`, `j` in `0..N`, with exact phase reduction.
fn phase_table(cutoff: usize, n: usize) -> Vec<(f64, f64)> {
    let k = cutoff as i64;
    let mut t = Vec::with_capacity((2 * cutoff + 1) * n);
    for m in -k..=k {
        for j in 0..n as i64 {
            let r = (m * j).rem_euclid(n as i64) as f64;
            let ang = 2.0 * std::f64::consts::PI * r / n as f64;
            t.push((ang.cos(), ang.sin()));
        }
    }
    t
}

#[inline]
fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn synthesize(grid: &Grid, cutoff: usize, coeffs: &[(f64, f64)]) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims();
    let w = 2 * cutoff + 1;
    let (ex, ey, ez) = (phase_table(cutoff, nx), phase_table(cutoff, ny), phase_table(cutoff, nz));
    // sum over n3
    let mut g = vec![(0.0, 0.0); w * w * nz];
    for a in 0..w * w {
        for c in 0..w {
            let coef = coeffs[a * w + c];
            if coef == (0.0, 0.0) {
                continue;
            }
            for k in 0..nz {
                let v = cmul(coef, ez[c * nz + k]);
                let slot = &mut g[a * nz + k];
                slot.0 += v.0;
                slot.1 += v.1;
            }
        }
    }
    // sum over n2
    let mut h = vec![(0.0, 0.0); w * ny * nz];
    for a in 0..w {
        for b in 0..w {
            for j in 0..ny {
                let e = ey[b * ny + j];
                for k in 0..nz {
                    let v = cmul(g[(a * w + b) * nz + k], e);
                    let slot = &mut h[(a * ny + j) * nz + k];
                    slot.0 += v.0;
                    slot.1 += v.1;
                }
            }
        }
    }
    // real part of the sum over n1
    let mut out = vec![0.0; grid.len()];
    for a in 0..w {
        for i in 0..nx {
            let e = ex[a * nx + i];
            for j in 0..ny {
                for k in 0..nz {
                    let v = h[(a * ny + j) * nz + k];
                    out[grid.index(i, j, k)] += v.0 * e.0 - v.1 * e.1;
                }
            }
        }
    }
    out
}

/// One zero-mean band-limited raster.
pub fn band_limited<R: Rng + ?Sized>(
    grid: &Grid,
    cutoff: usize,
    slope: f64,
    rng: &mut R,
) -> Result<Vec<f64>, FieldError> {
    check_cutoff(grid, cutoff)?;
    let coeffs = draw_coefficients(cutoff, slope, rng);
    Ok(synthesize(grid, cutoff, &coeffs))
}

/// Rescales `data` so that its largest absolute value is one (zero stays zero).
pub fn normalize_sup(data: &mut [f64]) {
    let m = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        data.iter_mut().for_each(|v| *v /= m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_field_across_resolutions() {
        let coarse = Grid::cube(12).unwrap();
        let fine = Grid::cube(24).unwrap();
        let a = band_limited(&coarse, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = band_limited(&fine, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                for k in 0..12 {
                    let x = a[coarse.index(i, j, k)];
                    let y = b[fine.index(2 * i, 2 * j, 2 * k)];
                    assert!((x - y).abs() < 1e-11, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn zero_mean_and_band_limited() {
        let grid = Grid::cube(16).unwrap();
        let f = band_limited(&grid, 4, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mean: f64 = f.iter().sum::<f64>() / f.len() as f64;
        assert!(mean.abs() < 1e-12);
        let t = crate::fft::SpectralTransform::new(&grid);
        let spec = t.forward(&f);
        let mut outside = 0.0f64;
        t.for_each_mode(|idx, k, _| {
            if k.iter().any(|&x| x.abs() > 4.5) {
                outside = outside.max(spec[idx].norm());
            }
        });
        assert!(outside < 1e-9);
    }

    #[test]
    fn cutoff_must_survive_truncation() {
        let grid = Grid::cube(12).unwrap();
        assert!(check_cutoff(&grid, 4).is_err());
        assert!(check_cutoff(&grid, 3).is_ok());
        assert!(check_cutoff(&grid, 0).is_err());
    }
}
