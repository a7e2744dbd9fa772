//! Empirical Gagliardo-Nirenberg constants on the periodic box.
//!
//! Homogeneous norms vanish on constants, so every sample is a zero-mean
//! band-limited field. Estimates are running maxima of the ratio LHS / RHS.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calculus::{Calculus, Prepared};
use crate::field::{same_grid, Field, ScalarField};
use crate::grid::Grid;
use crate::norms::lp_of_magnitudes;
use crate::random::band_limited;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnError {
    #[error("invalid exponent tuple (j={j}, m={m}, p={p}, q={q}, r={r}): {reason}")]
    Tuple {
        j: u32,
        m: u32,
        p: f64,
        q: f64,
        r: f64,
        reason: String,
    },
    #[error(transparent)]
    Field(#[from] crate::error::FieldError),
    #[error("sample count must be positive")]
    NoSamples,
}

fn inv(x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else {
        1.0 / x
    }
}

/// Interpolation exponent `theta` solving `1/p = j/3 + theta (1/r - m/3) + (1 - theta)/q`,
/// checked against `j/m <= theta <= 1`.
pub fn gn_theta(j: u32, m: u32, p: f64, q: f64, r: f64) -> Result<f64, GnError> {
    let fail = |reason: &str| GnError::Tuple {
        j,
        m,
        p,
        q,
        r,
        reason: reason.to_string(),
    };
    if j >= m {
        return Err(fail("requires j < m"));
    }
    for e in [p, q, r] {
        if !(e == f64::INFINITY || (e.is_finite() && e >= 1.0)) {
            return Err(fail("exponents must lie in [1, inf]"));
        }
    }
    let denom = inv(r) - m as f64 / 3.0 - inv(q);
    if denom.abs() < 1e-15 {
        return Err(fail("exponent relation is degenerate"));
    }
    let theta = (inv(p) - j as f64 / 3.0 - inv(q)) / denom;
    let lo = j as f64 / m as f64;
    if !(theta >= lo - 1e-12 && theta <= 1.0 + 1e-12) {
        return Err(fail(&format!("theta = {theta} outside [{lo}, 1]")));
    }
    Ok(theta.clamp(lo, 1.0))
}

/// Multi-indices of order `j` with their multinomial multiplicities.
fn multi_indices(j: u32) -> Vec<([u32; 3], f64)> {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let mut out = Vec::new();
    for a in 0..=j {
        for b in 0..=j - a {
            let c = j - a - b;
            out.push(([a, b, c], fact(j) / (fact(a) * fact(b) * fact(c))));
        }
    }
    out
}

/// Pointwise `|grad^j f|^2` (Frobenius over ordered index tuples), accumulated into `acc`.
fn add_derivative_sq(calc: &Calculus, p: &Prepared, j: u32, acc: &mut [f64]) {
    for (orders, mult) in multi_indices(j) {
        let d = calc.d_multi(p, orders);
        for (a, v) in acc.iter_mut().zip(d) {
            *a += mult * v * v;
        }
    }
}

fn derivative_magnitudes(calc: &Calculus, comps: &[&[f64]], j: u32) -> Vec<f64> {
    let len = comps[0].len();
    let mut acc = vec![0.0; len];
    for c in comps {
        let p = calc.prepare(c);
        add_derivative_sq(calc, &p, j, &mut acc);
    }
    acc.into_iter().map(f64::sqrt).collect()
}

/// `|| grad^j f ||_{L^p} / (|| grad^m f ||_{L^r}^theta || f ||_{L^q}^(1-theta))`.
pub fn gn_ratio(calc: &Calculus, f: &ScalarField, j: u32, m: u32, p: f64, q: f64, r: f64) -> Result<f64, GnError> {
    let theta = gn_theta(j, m, p, q, r)?;
    same_grid(calc.grid(), f.grid())?;
    f.ensure_finite("sample field")?;
    let cell = f.grid().cell_volume();
    let lhs = lp_of_magnitudes(&derivative_magnitudes(calc, &[f.data()], j), p, cell);
    let top = lp_of_magnitudes(&derivative_magnitudes(calc, &[f.data()], m), r, cell);
    let base = lp_of_magnitudes(&derivative_magnitudes(calc, &[f.data()], 0), q, cell);
    Ok(lhs / (top.powf(theta) * base.powf(1.0 - theta)))
}

/// Distribution of random sample fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLaw {
    /// Largest mode cutoff drawn; `None` means the largest the grid resolves.
    pub max_cutoff: Option<usize>,
    /// Spectral slope range for the coefficient damping.
    pub slope: (f64, f64),
}

impl Default for SampleLaw {
    fn default() -> Self {
        Self {
            max_cutoff: None,
            slope: (0.0, 3.0),
        }
    }
}

impl SampleLaw {
    fn draw(&self, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, GnError> {
        let n_min = grid.dims().into_iter().min().unwrap_or(4);
        let kmax = self.max_cutoff.unwrap_or((n_min - 1) / 3).max(1);
        let cutoff = rng.random_range(1..=kmax);
        let slope = rng.random_range(self.slope.0..=self.slope.1);
        Ok(band_limited(grid, cutoff, slope, rng)?)
    }
}

/// Running-max estimate of one constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GnEstimate {
    pub label: String,
    pub constant: f64,
    /// Running maximum after each sample.
    pub history: Vec<f64>,
}

impl GnEstimate {
    fn from_ratios(label: String, ratios: impl IntoIterator<Item = f64>) -> Self {
        let mut history = Vec::new();
        let mut best = 0.0f64;
        for r in ratios {
            if r.is_finite() {
                best = best.max(r);
            }
            history.push(best);
        }
        Self {
            label,
            constant: best,
            history,
        }
    }

    /// Relative growth of the running max over the last `window` samples.
    pub fn tail_increase(&self, window: usize) -> f64 {
        let n = self.history.len();
        if n == 0 {
            return 0.0;
        }
        let start = self.history[n.saturating_sub(window + 1)];
        if start > 0.0 {
            self.constant / start - 1.0
        } else {
            f64::INFINITY
        }
    }
}

/// Running-max estimate of the scalar inequality `(j, m, p, q, r)` over `samples` random fields.
#[allow(clippy::too_many_arguments)]
pub fn gn_estimate(
    calc: &Calculus,
    samples: usize,
    seed: u64,
    law: SampleLaw,
    j: u32,
    m: u32,
    p: f64,
    q: f64,
    r: f64,
) -> Result<GnEstimate, GnError> {
    gn_theta(j, m, p, q, r)?;
    if samples == 0 {
        return Err(GnError::NoSamples);
    }
    let grid = *calc.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(samples);
    for _ in 0..samples {
        let f = ScalarField::from_vec(grid, law.draw(&grid, &mut rng)?)?;
        ratios.push(gn_ratio(calc, &f, j, m, p, q, r)?);
    }
    Ok(GnEstimate::from_ratios(format!("j={j} m={m} p={p} q={q} r={r}"), ratios))
}

/// The inequality instances used by the smallness argument on the director.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnInstance {
    /// `|| grad v ||_{L^4}^4 <= c1 || grad v ||_{L^3}^2 || grad^2 v ||_{L^2}^2`.
    C1,
    /// `|| grad v ||_{L^5}^5 <= c2 || grad v ||_{L^3}^2 || grad |grad v|^{3/2} ||_{L^2}^2`.
    C2,
    /// `|| |grad v| |grad^2 v| ||_{L^2}^2 <= c3 || grad v ||_{L^3}^2 || grad^3 v ||_{L^2}^2`.
    C3,
    /// `|| |grad v| |grad w| ||_{L^2}^2 <= c4 || grad v ||_{L^3}^2 || grad^2 w ||_{L^2}^2`.
    C4,
    /// `|| grad v ||_{L^3} <= C || grad v ||_{L^2}^{1/2} || grad^2 v ||_{L^2}^{1/2}`.
    L3Interpolation,
    /// `|| grad v ||_{L^6} <= C || grad^2 v ||_{L^2}`.
    L6Sobolev,
}

impl GnInstance {
    pub const ALL: [GnInstance; 6] = [
        GnInstance::C1,
        GnInstance::C2,
        GnInstance::C3,
        GnInstance::C4,
        GnInstance::L3Interpolation,
        GnInstance::L6Sobolev,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GnInstance::C1 => "c1",
            GnInstance::C2 => "c2",
            GnInstance::C3 => "c3",
            GnInstance::C4 => "c4",
            GnInstance::L3Interpolation => "grad_l3_interp",
            GnInstance::L6Sobolev => "grad_l6_sobolev",
        }
    }
}

/// Ratios of every [`GnInstance`] for one pair of sample vector fields.
fn instance_ratios(calc: &Calculus, v: &[Vec<f64>; 3], w: &[Vec<f64>; 3]) -> [f64; 6] {
    let cell = calc.grid().cell_volume();
    let vc: Vec<&[f64]> = v.iter().map(|c| c.as_slice()).collect();
    let wc: Vec<&[f64]> = w.iter().map(|c| c.as_slice()).collect();
    let g1 = derivative_magnitudes(calc, &vc, 1);
    let g2 = derivative_magnitudes(calc, &vc, 2);
    let g3 = derivative_magnitudes(calc, &vc, 3);
    let wg1 = derivative_magnitudes(calc, &wc, 1);
    let wg2 = derivative_magnitudes(calc, &wc, 2);
    let pow32: Vec<f64> = g1.iter().map(|g| g.powf(1.5)).collect();
    let grad_pow32 = derivative_magnitudes(calc, &[&pow32], 1);
    let l = |m: &[f64], p: f64| lp_of_magnitudes(m, p, cell);
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };

    let l3 = l(&g1, 3.0);
    let l3sq = l3 * l3;
    let h2 = l(&g2, 2.0);
    [
        l(&g1, 4.0).powi(4) / (l3sq * h2 * h2),
        l(&g1, 5.0).powi(5) / (l3sq * l(&grad_pow32, 2.0).powi(2)),
        l(&prod(&g1, &g2), 2.0).powi(2) / (l3sq * l(&g3, 2.0).powi(2)),
        l(&prod(&g1, &wg1), 2.0).powi(2) / (l3sq * l(&wg2, 2.0).powi(2)),
        l3 / (l(&g1, 2.0) * h2).sqrt(),
        l(&g1, 6.0) / h2,
    ]
}

/// `delta = min{1/(2 sqrt(2 c1)), 1/(9 c2), 1/(2 c3), 1/(4 c4)}` and `eps0 = delta / 2`.
pub fn delta_from_constants(c: [f64; 4]) -> (f64, f64) {
    let delta = [
        1.0 / (2.0 * (2.0 * c[0]).sqrt()),
        1.0 / (9.0 * c[1]),
        1.0 / (2.0 * c[2]),
        1.0 / (4.0 * c[3]),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    (delta, 0.5 * delta)
}

/// Estimates of all [`GnInstance`]s plus the derived smallness constants.
#[derive(Debug, Clone, PartialEq)]
pub struct GnSuite {
    pub estimates: Vec<(GnInstance, GnEstimate)>,
    pub delta: f64,
    pub eps0: f64,
}

impl GnSuite {
    pub fn constant(&self, which: GnInstance) -> f64 {
        self.estimates
            .iter()
            .find(|(w, _)| *w == which)
            .map(|(_, e)| e.constant)
            .unwrap_or(f64::NAN)
    }

    /// Plain-text table of constants, tail growth and the derived `delta`, `eps0`.
    pub fn summary(&self, window: usize) -> String {
        let mut s = String::from("constant,estimate,tail_increase\n");
        for (w, e) in &self.estimates {
            s.push_str(&format!("{},{:.6e},{:.4e}\n", w.label(), e.constant, e.tail_increase(window)));
        }
        s.push_str(&format!("delta,{:.6e},\neps0,{:.6e},\n", self.delta, self.eps0));
        s
    }
}

/// Running-max estimates of every instance over `samples` seeded random vector fields.
pub fn named_constants(calc: &Calculus, samples: usize, seed: u64, law: SampleLaw) -> Result<GnSuite, GnError> {
    if samples == 0 {
        return Err(GnError::NoSamples);
    }
    let grid = *calc.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios: Vec<[f64; 6]> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let v: [Vec<f64>; 3] = [law.draw(&grid, &mut rng)?, law.draw(&grid, &mut rng)?, law.draw(&grid, &mut rng)?];
        let w: [Vec<f64>; 3] = [law.draw(&grid, &mut rng)?, law.draw(&grid, &mut rng)?, law.draw(&grid, &mut rng)?];
        ratios.push(instance_ratios(calc, &v, &w));
    }
    let estimates: Vec<(GnInstance, GnEstimate)> = GnInstance::ALL
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, GnEstimate::from_ratios(w.label().to_string(), ratios.iter().map(|r| r[i]))))
        .collect();
    let c = [0, 1, 2, 3].map(|i| estimates[i].1.constant);
    let (delta, eps0) = delta_from_constants(c);
    Ok(GnSuite { estimates, delta, eps0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CalculusMode;

    #[test]
    fn theta_examples() {
        assert!((gn_theta(1, 2, 4.0, 2.0, 2.0).unwrap() - 7.0 / 8.0).abs() < 1e-15);
        // Sobolev: || f ||_{L^6} <= C || grad f ||_{L^2}
        assert!((gn_theta(0, 1, 6.0, 2.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(gn_theta(2, 1, 2.0, 2.0, 2.0).is_err());
        assert!(gn_theta(1, 2, 0.5, 2.0, 2.0).is_err());
        // theta below j/m
        assert!(gn_theta(1, 2, 1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn multiplicities_count_ordered_tuples() {
        for j in 0..4 {
            let total: f64 = multi_indices(j).iter().map(|(_, m)| m).sum();
            assert_eq!(total, 3f64.powi(j as i32));
        }
    }

    #[test]
    fn delta_recipe() {
        let (d, e) = delta_from_constants([0.5, 0.01, 1.0, 0.1]);
        // 1/(2 sqrt(1)) = 0.5, 1/0.09, 0.5, 2.5
        assert_eq!(d, 0.5);
        assert_eq!(e, 0.25);
    }

    #[test]
    fn running_max_is_monotone() {
        let grid = Grid::cube(12).unwrap();
        let calc = Calculus::new(grid, CalculusMode::Spectral);
        let est = gn_estimate(&calc, 20, 3, SampleLaw::default(), 1, 2, 4.0, 2.0, 2.0).unwrap();
        assert!(est.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(est.history.len(), 20);
    }
}
