//! Functionals monitored along a trajectory: energy, the effective viscous
//! flux and its elliptic identity, geometric director identities, bootstrap
//! accumulators, per-tick run records and empirical Gagliardo-Nirenberg
//! constants.

mod bootstrap;
mod gn;
mod record;

pub use bootstrap::{bootstrap_update, BootstrapReport, TickSample};
pub use gn::{
    delta_from_constants, gn_estimate, gn_ratio, gn_theta, named_constants, GnError, GnEstimate, GnInstance,
    GnSuite, SampleLaw,
};
pub use record::{observe, write_records_csv, Observation, RecordWriter, RunRecord, RECORD_COLUMNS};

use std::fmt;
use std::str::FromStr;

use crate::calculus::Calculus;
use crate::error::FieldError;
use crate::field::{Field, ScalarField, VectorField};
use crate::model::{check_density, power, velocity_tendency, Derivatives, FieldsRef, PhysParams, State, LOG_BRANCH_TOL};
use crate::norms::{integrate, pairwise_sum, pairwise_sum_map};

/// Which constant multiplies `rho_bar^alpha / 2^(alpha+1)` in the velocity functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyWeight {
    #[default]
    Mu1,
    /// `2 mu1 + mu2`.
    Longitudinal,
}

/// Coefficient of `div u I` in the viscous part of the flux source `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HReading {
    /// `mu2`, consistent with the momentum equation.
    #[default]
    ViscosityPair,
    /// The director relaxation rate `lambda`.
    DirectorLambda,
}

/// Interpretation flags for ambiguous symbols in the monitored functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Readings {
    pub energy_weight: EnergyWeight,
    pub h_reading: HReading,
}

impl fmt::Display for EnergyWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnergyWeight::Mu1 => "mu1",
            EnergyWeight::Longitudinal => "longitudinal",
        })
    }
}

impl FromStr for EnergyWeight {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mu1" => Ok(Self::Mu1),
            "longitudinal" => Ok(Self::Longitudinal),
            _ => Err(format!("expected mu1 or longitudinal, got {s:?}")),
        }
    }
}

impl fmt::Display for HReading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HReading::ViscosityPair => "mu2",
            HReading::DirectorLambda => "lambda",
        })
    }
}

impl FromStr for HReading {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mu2" => Ok(Self::ViscosityPair),
            "lambda" => Ok(Self::DirectorLambda),
            _ => Err(format!("expected mu2 or lambda, got {s:?}")),
        }
    }
}

impl EnergyWeight {
    /// `mu rho_bar^alpha / 2^(alpha+1)`.
    pub fn weight(self, p: &PhysParams) -> f64 {
        let mu = match self {
            EnergyWeight::Mu1 => p.mu1,
            EnergyWeight::Longitudinal => p.longitudinal(),
        };
        mu * p.rho_bar.powf(p.alpha) / 2f64.powf(p.alpha + 1.0)
    }
}

// ---- pressure potential and energy -----------------------------------------

/// `G(rho) = rho int_{rho_bar}^{rho} (P(s) - P(rho_bar)) / s^2 ds` in closed form.
///
/// Written as `a rho_bar^gamma [s^gamma - 1 - gamma (s - 1)] / (gamma - 1)` with
/// `s = rho / rho_bar`, which vanishes exactly at `rho = rho_bar`; near that
/// point the bracket is summed as its binomial series to avoid cancellation.
pub fn g_pointwise(rho: f64, a: f64, gamma: f64, rho_bar: f64) -> f64 {
    let x = (rho - rho_bar) / rho_bar;
    let bracket = if x.abs() < 1e-2 {
        let mut term = 0.5 * gamma * (gamma - 1.0) * x * x;
        let mut sum = 0.0;
        let mut k = 2.0;
        while k < 60.0 {
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            term *= (gamma - k) / (k + 1.0) * x;
            k += 1.0;
        }
        sum
    } else {
        (gamma * x.ln_1p()).exp_m1() - gamma * x
    };
    (a * rho_bar.powf(gamma) * bracket / (gamma - 1.0)).max(0.0)
}

/// `G(rho)` and `|| G(rho) ||_{L^1}`.
pub fn g_potential(rho: &ScalarField, p: &PhysParams) -> Result<(ScalarField, f64), FieldError> {
    check_density(rho)?;
    let g = rho.map(|r| g_pointwise(r, p.a, p.gamma, p.rho_bar));
    let l1 = integrate(&g);
    Ok((g, l1))
}

fn grad_d_sq_integral(der: &Derivatives, grid_len: usize, cell: f64) -> f64 {
    let g2: Vec<f64> = (0..grid_len).map(|n| der.grad_d_sq(n)).collect();
    pairwise_sum(&g2) * cell
}

fn kinetic(state: FieldsRef) -> f64 {
    let rho = state.rho.data();
    let u = state.u.comps();
    let e: Vec<f64> = (0..rho.len())
        .map(|n| rho[n] * (u[0][n] * u[0][n] + u[1][n] * u[1][n] + u[2][n] * u[2][n]))
        .collect();
    0.5 * pairwise_sum(&e) * state.rho.grid().cell_volume()
}

/// `1/2 || sqrt(rho) u ||^2 + || G(rho) ||_{L^1} + nu/2 || grad d ||^2`.
pub fn total_energy(calc: &Calculus, state: &State, p: &PhysParams) -> Result<f64, FieldError> {
    crate::field::same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let der = Derivatives::compute(calc, state.view());
    Ok(energy_from(state.view(), p, &der))
}

pub(crate) fn energy_from(state: FieldsRef, p: &PhysParams, der: &Derivatives) -> f64 {
    let grid = *state.rho.grid();
    let g = pairwise_sum_map(state.rho.data(), |r| g_pointwise(r, p.a, p.gamma, p.rho_bar)) * grid.cell_volume();
    kinetic(state) + g + 0.5 * p.nu * grad_d_sq_integral(der, grid.len(), grid.cell_volume())
}

// ---- time derivative of u ---------------------------------------------------

/// `u_t` from the model and the material derivative `u_t + u . grad u`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRates {
    pub u_t: VectorField,
    pub material: VectorField,
}

pub fn u_time_derivative(calc: &Calculus, state: &State, p: &PhysParams) -> Result<VelocityRates, FieldError> {
    crate::field::same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let view = state.view();
    let der = Derivatives::compute(calc, view);
    let ut = velocity_tendency(calc, view, p, &der);
    let material = material_derivative(view, &der, &ut);
    let grid = *state.grid();
    Ok(VelocityRates {
        u_t: VectorField::from_components(grid, ut)?,
        material: VectorField::from_components(grid, material)?,
    })
}

fn material_derivative(state: FieldsRef, der: &Derivatives, ut: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
    let u = state.u.comps();
    std::array::from_fn(|i| {
        (0..u[0].len())
            .map(|n| ut[i][n] + u[0][n] * der.ju[3 * i][n] + u[1][n] * der.ju[3 * i + 1][n] + u[2][n] * der.ju[3 * i + 2][n])
            .collect()
    })
}

// ---- effective viscous flux -------------------------------------------------

/// Transformed pressure `P'(rho) = a gamma rho^(gamma - alpha - 1)` integrated:
/// `a gamma / (gamma - alpha) rho^(gamma - alpha)`, or `a gamma ln rho` when
/// `|gamma - alpha| < 1e-12`.
pub fn transformed_pressure(rho: f64, p: &PhysParams) -> f64 {
    let ag = p.a * p.gamma;
    if (p.gamma - p.alpha).abs() < LOG_BRANCH_TOL {
        ag * rho.ln()
    } else {
        ag / (p.gamma - p.alpha) * power(rho, p.gamma - p.alpha)
    }
}

/// `transformed_pressure(rho) - transformed_pressure(rho_bar)`.
pub fn transformed_pressure_excess(rho: f64, p: &PhysParams) -> f64 {
    if (p.gamma - p.alpha).abs() < LOG_BRANCH_TOL {
        p.a * p.gamma * (rho / p.rho_bar).ln()
    } else {
        transformed_pressure(rho, p) - transformed_pressure(p.rho_bar, p)
    }
}

fn flux_raster(state: FieldsRef, p: &PhysParams, der: &Derivatives) -> Vec<f64> {
    let l = p.longitudinal();
    let rho = state.rho.data();
    (0..rho.len())
        .map(|n| l * der.div_u(n) - transformed_pressure_excess(rho[n], p))
        .collect()
}

/// Effective viscous flux `F = (2 mu1 + mu2) div u - (P'(rho) - P'(rho_bar))` and
/// vorticity `w = curl u`.
///
/// With this sign convention `-lap F = div H` holds for the source `H` used by
/// [`flux_residual`].
pub fn effective_flux(calc: &Calculus, state: &State, p: &PhysParams) -> Result<(ScalarField, VectorField), FieldError> {
    crate::field::same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let der = Derivatives::compute(calc, state.view());
    let f = ScalarField::from_vec(*state.grid(), flux_raster(state.view(), p, &der))?;
    Ok((f, calc.curl(&state.u)?))
}

/// `H = -rho^(1-alpha) u_dot + alpha rho^(-1) grad rho . (2 mu1 D u + c div u I) - nu rho^(-alpha) grad d . lap d`
/// where `c` is chosen by `reading`.
fn flux_source(
    calc: &Calculus,
    state: FieldsRef,
    p: &PhysParams,
    der: &Derivatives,
    ut: &[Vec<f64>; 3],
    reading: HReading,
) -> [Vec<f64>; 3] {
    let c = match reading {
        HReading::ViscosityPair => p.mu2,
        HReading::DirectorLambda => p.lambda,
    };
    let rho = state.rho.data();
    let pr = calc.prepare(rho);
    let grad_rho: [Vec<f64>; 3] = std::array::from_fn(|a| calc.d1(&pr, a));
    let material = material_derivative(state, der, ut);
    std::array::from_fn(|i| {
        (0..rho.len())
            .map(|n| {
                let r = rho[n];
                let div = der.div_u(n);
                let mut visc = 0.0;
                for j in 0..3 {
                    let d = 0.5 * (der.ju[3 * i + j][n] + der.ju[3 * j + i][n]);
                    let s = 2.0 * p.mu1 * d + if i == j { c * div } else { 0.0 };
                    visc += grad_rho[j][n] * s;
                }
                let couple: f64 = (0..3).map(|k| der.jd[3 * k + i][n] * der.lap_d[k][n]).sum();
                -power(r, 1.0 - p.alpha) * material[i][n] + p.alpha / r * visc - p.nu * couple / power(r, p.alpha)
            })
            .collect()
    })
}

fn l2_raw(data: &[f64], cell: f64) -> f64 {
    (pairwise_sum_map(data, |x| x * x) * cell).sqrt()
}

pub(crate) fn flux_residual_from(
    calc: &Calculus,
    state: FieldsRef,
    p: &PhysParams,
    der: &Derivatives,
    ut: &[Vec<f64>; 3],
    reading: HReading,
) -> f64 {
    let cell = state.rho.grid().cell_volume();
    let f = flux_raster(state, p, der);
    let lap_f = calc.lap(&calc.prepare(&f));
    let h = flux_source(calc, state, p, der, ut, reading);
    let div_h = calc.div_raw([&h[0], &h[1], &h[2]]);
    let res: Vec<f64> = lap_f.iter().zip(&div_h).map(|(a, b)| -a - b).collect();
    l2_raw(&res, cell) / (l2_raw(&lap_f, cell) + l2_raw(&div_h, cell) + f64::EPSILON)
}

/// Normalised residual `|| -lap F - div H || / (|| lap F || + || div H || + eps)`
/// using the supplied `u_t`.
pub fn flux_residual_with(
    calc: &Calculus,
    state: &State,
    p: &PhysParams,
    u_t: &VectorField,
    reading: HReading,
) -> Result<f64, FieldError> {
    crate::field::same_grid(calc.grid(), state.grid())?;
    crate::field::same_grid(calc.grid(), u_t.grid())?;
    state.validate()?;
    u_t.ensure_finite("u_t")?;
    let der = Derivatives::compute(calc, state.view());
    Ok(flux_residual_from(calc, state.view(), p, &der, u_t.comps(), reading))
}

/// [`flux_residual_with`] with `u_t` from the model right-hand side.
pub fn flux_residual(calc: &Calculus, state: &State, p: &PhysParams) -> Result<f64, FieldError> {
    crate::field::same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let view = state.view();
    let der = Derivatives::compute(calc, view);
    let ut = velocity_tendency(calc, view, p, &der);
    Ok(flux_residual_from(calc, view, p, &der, &ut, HReading::ViscosityPair))
}

// ---- director identities ------------------------------------------------------

/// Defects of `lap d . d = -|grad d|^2` and of the splitting
/// `|| lap d ||^2 = || lap d + |grad d|^2 d ||^2 + || grad d ||_{L^4}^4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectorIdentities {
    /// `|| lap d . d + |grad d|^2 ||_{L^2}`.
    pub tension_defect: f64,
    /// Absolute splitting defect.
    pub splitting_defect: f64,
    /// Splitting defect divided by `|| lap d ||^2` (zero when that vanishes).
    pub splitting_relative: f64,
}

pub fn director_identities(calc: &Calculus, d: &crate::field::DirectorField) -> Result<DirectorIdentities, FieldError> {
    crate::field::same_grid(calc.grid(), d.grid())?;
    d.ensure_finite("director")?;
    let grid = *d.grid();
    let dv = d.as_vector();
    let u0 = VectorField::zeros(grid);
    let rho = ScalarField::constant(grid, 1.0);
    let der = Derivatives::compute(
        calc,
        FieldsRef {
            rho: &rho,
            u: &u0,
            d: dv,
        },
    );
    let dc = dv.comps();
    let len = grid.len();
    let mut tension = vec![0.0; len];
    let mut lap_sq = vec![0.0; len];
    let mut tens_sq = vec![0.0; len];
    let mut quartic = vec![0.0; len];
    for n in 0..len {
        let g2 = der.grad_d_sq(n);
        let mut dot = 0.0;
        let mut l2 = 0.0;
        let mut t2 = 0.0;
        for i in 0..3 {
            let l = der.lap_d[i][n];
            dot += l * dc[i][n];
            l2 += l * l;
            let t = l + g2 * dc[i][n];
            t2 += t * t;
        }
        tension[n] = dot + g2;
        lap_sq[n] = l2;
        tens_sq[n] = t2;
        quartic[n] = g2 * g2;
    }
    let cell = grid.cell_volume();
    let a = pairwise_sum(&lap_sq) * cell;
    let b = pairwise_sum(&tens_sq) * cell;
    let c = pairwise_sum(&quartic) * cell;
    let splitting = (a - b - c).abs();
    Ok(DirectorIdentities {
        tension_defect: l2_raw(&tension, cell),
        splitting_defect: splitting,
        splitting_relative: if a > 0.0 { splitting / a } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::DirectorField;
    use crate::grid::{CalculusMode, Grid};

    #[test]
    fn g_vanishes_at_background_and_matches_quadratic_case() {
        assert_eq!(g_pointwise(4.0, 1.3, 1.7, 4.0), 0.0);
        assert!((g_pointwise(2.0, 1.0, 2.0, 1.0) - 1.0).abs() < 1e-15);
        // both sides of the series switch
        for rho in [0.999, 0.99999, 1.00001, 1.02, 3.0] {
            let exact = (rho - 1.0) * (rho - 1.0);
            assert!((g_pointwise(rho, 1.0, 2.0, 1.0) - exact).abs() <= 1e-14 * exact.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn log_branch_flux_example() {
        let p = PhysParams {
            a: 1.0,
            gamma: 2.0,
            alpha: 2.0,
            rho_bar: 3.0,
            ..PhysParams::default()
        };
        let grid = Grid::cube(8).unwrap();
        let calc = Calculus::new(grid, CalculusMode::Spectral);
        let mut s = State::equilibrium(grid, &p).unwrap();
        s.rho = ScalarField::constant(grid, std::f64::consts::E * 3.0);
        let (f, w) = effective_flux(&calc, &s, &p).unwrap();
        assert!(f.data().iter().all(|v| (v + 2.0).abs() < 1e-14));
        assert!(w.magnitude().max() == 0.0);
    }

    #[test]
    fn twist_identities_hold_and_energy_matches() {
        let grid = Grid::cube(16).unwrap();
        let calc = Calculus::new(grid, CalculusMode::Spectral);
        let k = 2.0;
        let d = DirectorField::normalized(VectorField::from_fn(grid, |x| [(k * x[0]).sin(), 0.0, (k * x[0]).cos()]))
            .unwrap();
        let id = director_identities(&calc, &d).unwrap();
        assert!(id.tension_defect < 1e-10, "{id:?}");
        assert!(id.splitting_relative < 1e-12, "{id:?}");
        let p = PhysParams::default();
        let mut s = State::equilibrium(grid, &p).unwrap();
        s.d = d;
        let e = total_energy(&calc, &s, &p).unwrap();
        let expect = 0.5 * p.nu * k * k * grid.volume();
        assert!((e - expect).abs() < 1e-11 * expect);
    }

    #[test]
    fn equilibrium_diagnostics_vanish() {
        let grid = Grid::cube(8).unwrap();
        let p = PhysParams::default();
        let s = State::equilibrium(grid, &p).unwrap();
        for mode in [CalculusMode::Spectral, CalculusMode::FiniteDifference] {
            let calc = Calculus::new(grid, mode);
            assert_eq!(total_energy(&calc, &s, &p).unwrap(), 0.0);
            assert_eq!(flux_residual(&calc, &s, &p).unwrap(), 0.0);
            let r = u_time_derivative(&calc, &s, &p).unwrap();
            assert_eq!(r.u_t.magnitude().max(), 0.0);
            assert_eq!(r.material.magnitude().max(), 0.0);
        }
    }

    #[test]
    fn reading_flags_parse() {
        assert_eq!("longitudinal".parse::<EnergyWeight>().unwrap(), EnergyWeight::Longitudinal);
        assert_eq!("lambda".parse::<HReading>().unwrap(), HReading::DirectorLambda);
        assert!("mu".parse::<HReading>().is_err());
        assert_eq!(HReading::ViscosityPair.to_string().parse::<HReading>().unwrap(), HReading::ViscosityPair);
    }
}
