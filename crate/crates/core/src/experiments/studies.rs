use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::calculus::Calculus;
use crate::diagnostics::flux_residual;
use crate::error::FieldError;
use crate::field::{DirectorField, ScalarField, VectorField};
use crate::grid::{CalculusMode, Grid};
use crate::integrator::{step_with_dt, Projection, StepError};
use crate::model::{rhs, PhysParams, State};
use crate::norms::pairwise_sum_map;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("scaling factor {tau} cannot be resolved on a {dims:?} grid")]
    Unresolvable { tau: usize, dims: [usize; 3] },
    #[error("a study needs at least {needed} levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Step(#[from] StepError),
}

// ---- tables ----------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub label: String,
    /// Grid spacing or step size.
    pub h: f64,
    pub error: f64,
}

/// Errors on a refinement ladder with the observed orders between neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub title: String,
    pub rows: Vec<ConvergenceRow>,
    pub orders: Vec<f64>,
}

impl ConvergenceTable {
    pub fn new(title: impl Into<String>, rows: Vec<ConvergenceRow>) -> Self {
        let orders = rows
            .windows(2)
            .map(|w| (w[0].error / w[1].error).ln() / (w[0].h / w[1].h).ln())
            .collect();
        Self {
            title: title.into(),
            rows,
            orders,
        }
    }

    /// Order between the two finest levels.
    pub fn observed_order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }

    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Errors strictly decrease along the ladder.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,h,error,order\n");
        for (i, r) in self.rows.iter().enumerate() {
            let order = if i == 0 {
                String::new()
            } else {
                format!("{:.6}", self.orders[i - 1])
            };
            out.push_str(&format!("{},{:.16e},{:.16e},{}\n", r.label, r.h, r.error, order));
        }
        out
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for (i, r) in self.rows.iter().enumerate() {
            write!(f, "  {:<12} h = {:<12.4e} error = {:<12.4e}", r.label, r.h, r.error)?;
            if i > 0 {
                write!(f, " order = {:.3}", self.orders[i - 1])?;
            }
            writeln!(f)?;
        }
        if !self.monotone() {
            writeln!(f, "  warning: errors are not monotone")?;
        }
        Ok(())
    }
}

// ---- field helpers ------------------------------------------------------------------

fn l2(data: &[f64], cell: f64) -> f64 {
    (pairwise_sum_map(data, |x| x * x) * cell).sqrt()
}

fn diff_sq(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// L2 distance between two states, all fields together.
fn state_distance(a: &State, b: &State) -> f64 {
    let cell = a.grid().cell_volume();
    let mut s = l2(&diff_sq(a.rho.data(), b.rho.data()), cell).powi(2);
    for c in 0..3 {
        s += l2(&diff_sq(a.u.component(c), b.u.component(c)), cell).powi(2);
        s += l2(&diff_sq(a.d.as_vector().component(c), b.d.as_vector().component(c)), cell).powi(2);
    }
    s.sqrt()
}

fn relative(diff: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        diff
    } else {
        diff / reference
    }
}

fn sample_every(grid: &Grid, coarse: &Grid, data: &[f64], tau: usize, scale: f64) -> Vec<f64> {
    let [c0, c1, c2] = coarse.dims();
    let mut out = Vec::with_capacity(coarse.len());
    for i in 0..c0 {
        for j in 0..c1 {
            for k in 0..c2 {
                out.push(scale * data[grid.index(tau * i, tau * j, tau * k)]);
            }
        }
    }
    out
}

/// `f(tau x)` sampled on the same grid: node `i` reads node `tau i mod N`.
fn compose(grid: &Grid, data: &[f64], tau: usize, scale: f64) -> Vec<f64> {
    let [n0, n1, n2] = grid.dims();
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..n0 {
        for j in 0..n1 {
            for k in 0..n2 {
                out.push(scale * data[grid.index(tau * i % n0, tau * j % n1, tau * k % n2)]);
            }
        }
    }
    out
}

fn check_tau(grid: &Grid, tau: usize) -> Result<Grid, StudyError> {
    let dims = grid.dims();
    if tau == 0 || dims.iter().any(|n| n % tau != 0 || n / tau < 2) {
        return Err(StudyError::Unresolvable { tau, dims });
    }
    Ok(grid.with_dims(dims.map(|n| n / tau))?)
}

/// `(rho(tau x), tau u(tau x), d(tau x))` at time `t / tau^2`.
pub fn rescale_state(state: &State, tau: usize) -> Result<State, StudyError> {
    let grid = *state.grid();
    check_tau(&grid, tau)?;
    let s = tau as f64;
    let rho = ScalarField::from_vec(grid, compose(&grid, state.rho.data(), tau, 1.0))?;
    let u = VectorField::from_components(grid, std::array::from_fn(|c| compose(&grid, state.u.component(c), tau, s)))?;
    let d = VectorField::from_components(
        grid,
        std::array::from_fn(|c| compose(&grid, state.d.as_vector().component(c), tau, 1.0)),
    )?;
    Ok(State {
        rho,
        u,
        d: DirectorField::from_stored(d),
        t: state.t / (s * s),
    })
}

/// Parameters under which the rescaled fields solve the same system: `a -> tau^2 a`.
pub fn rescale_params(p: &PhysParams, tau: usize) -> PhysParams {
    let s = tau as f64;
    PhysParams { a: p.a * s * s, ..*p }
}

fn restrict_state(state: &State, tau: usize) -> Result<State, StudyError> {
    let grid = *state.grid();
    let coarse = check_tau(&grid, tau)?;
    let rho = ScalarField::from_vec(coarse, sample_every(&grid, &coarse, state.rho.data(), tau, 1.0))?;
    let u = VectorField::from_components(
        coarse,
        std::array::from_fn(|c| sample_every(&grid, &coarse, state.u.component(c), tau, 1.0)),
    )?;
    let d = VectorField::from_components(
        coarse,
        std::array::from_fn(|c| sample_every(&grid, &coarse, state.d.as_vector().component(c), tau, 1.0)),
    )?;
    Ok(State {
        rho,
        u,
        d: DirectorField::from_stored(d),
        t: state.t,
    })
}

// ---- scaling ----------------------------------------------------------------------------

/// Relative defects of the scaling covariance, per field `(rho, u, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingDefect {
    pub tau: usize,
    /// Rescaled evaluation against the rescaled original.
    pub defect: [f64; 3],
    /// Coarse grid (`N / tau`) against the fine one restricted to it.
    pub self_convergence: [f64; 3],
}

impl ScalingDefect {
    pub fn max_defect(&self) -> f64 {
        self.defect.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_self_convergence(&self) -> f64 {
        self.self_convergence.iter().copied().fold(0.0, f64::max)
    }

    /// `defect <= factor * self_convergence` for every field.
    pub fn within(&self, factor: f64) -> bool {
        self.defect
            .iter()
            .zip(&self.self_convergence)
            .all(|(d, s)| *d <= factor * s)
    }
}

fn field_rel(a: &[f64], b: &[f64], cell: f64) -> f64 {
    relative(l2(&diff_sq(a, b), cell), l2(b, cell))
}

fn vec_rel(a: &VectorField, b: &VectorField, cell: f64) -> f64 {
    let num: f64 = (0..3).map(|c| l2(&diff_sq(a.component(c), b.component(c)), cell).powi(2)).sum();
    let den: f64 = (0..3).map(|c| l2(b.component(c), cell).powi(2)).sum();
    relative(num.sqrt(), den.sqrt())
}

/// Scaling covariance of the right-hand side.
///
/// With `s(x) = (rho, u, d)(x)` and `s_tau = (rho(tau x), tau u(tau x), d(tau x))`
/// evaluated under `a -> tau^2 a`, the tendencies satisfy
/// `R_tau(x) = (tau^2, tau^3, tau^2) R(tau x)`. The self-convergence reference
/// compares the original evaluated on the `N / tau` grid with the fine-grid
/// tendency restricted to it.
pub fn rhs_scaling_defect(mode: CalculusMode, state: &State, p: &PhysParams, tau: usize) -> Result<ScalingDefect, StudyError> {
    let grid = *state.grid();
    let coarse = check_tau(&grid, tau)?;
    let cell = grid.cell_volume();
    let s = tau as f64;
    let calc = Calculus::new(grid, mode);
    let base = rhs(&calc, state, p)?;
    let scaled = rhs(&calc, &rescale_state(state, tau)?, &rescale_params(p, tau))?;

    let want_rho = compose(&grid, base.rho.data(), tau, s * s);
    let want_u = VectorField::from_components(grid, std::array::from_fn(|c| compose(&grid, base.u.component(c), tau, s * s * s)))?;
    let want_d = VectorField::from_components(grid, std::array::from_fn(|c| compose(&grid, base.d.component(c), tau, s * s)))?;
    let defect = [
        field_rel(scaled.rho.data(), &want_rho, cell),
        vec_rel(&scaled.u, &want_u, cell),
        vec_rel(&scaled.d, &want_d, cell),
    ];

    let ccell = coarse.cell_volume();
    let ccalc = Calculus::new(coarse, mode);
    let on_coarse = rhs(&ccalc, &restrict_state(state, tau)?, p)?;
    let r_rho = sample_every(&grid, &coarse, base.rho.data(), tau, 1.0);
    let r_u = VectorField::from_components(coarse, std::array::from_fn(|c| sample_every(&grid, &coarse, base.u.component(c), tau, 1.0)))?;
    let r_d = VectorField::from_components(coarse, std::array::from_fn(|c| sample_every(&grid, &coarse, base.d.component(c), tau, 1.0)))?;
    let self_convergence = [
        field_rel(on_coarse.rho.data(), &r_rho, ccell),
        vec_rel(&on_coarse.u, &r_u, ccell),
        vec_rel(&on_coarse.d, &r_d, ccell),
    ];
    Ok(ScalingDefect {
        tau,
        defect,
        self_convergence,
    })
}

fn evolve(calc: &Calculus, state: &State, p: &PhysParams, projection: Projection, dt: f64, steps: usize) -> Result<State, StudyError> {
    let mut s = state.clone();
    for _ in 0..steps {
        s = step_with_dt(calc, &s, p, projection, dt)?.state;
    }
    Ok(s)
}

fn state_rel(a: &State, b: &State) -> [f64; 3] {
    let cell = a.grid().cell_volume();
    [
        field_rel(a.rho.data(), b.rho.data(), cell),
        vec_rel(&a.u, &b.u, cell),
        vec_rel(a.d.as_vector(), b.d.as_vector(), cell),
    ]
}

/// Trajectory version of [`rhs_scaling_defect`].
///
/// The rescaled data is evolved to `t / tau^2` with steps `dt / tau^2`, the
/// original to `t` with steps `dt`, and the two are compared after rescaling
/// the latter. The reference is the coarse-grid evolution against the
/// restricted fine one.
pub fn scaling_invariance_study(
    mode: CalculusMode,
    state: &State,
    p: &PhysParams,
    tau: usize,
    t: f64,
    steps: usize,
    projection: Projection,
) -> Result<ScalingDefect, StudyError> {
    let grid = *state.grid();
    let coarse = check_tau(&grid, tau)?;
    let s2 = (tau * tau) as f64;
    let dt = t / steps.max(1) as f64;
    let calc = Calculus::new(grid, mode);
    let original = evolve(&calc, state, p, projection, dt, steps)?;
    let scaled = evolve(&calc, &rescale_state(state, tau)?, &rescale_params(p, tau), projection, dt / s2, steps)?;
    let defect = state_rel(&scaled, &rescale_state(&original, tau)?);
    let ccalc = Calculus::new(coarse, mode);
    let on_coarse = evolve(&ccalc, &restrict_state(state, tau)?, p, projection, dt, steps)?;
    let self_convergence = state_rel(&on_coarse, &restrict_state(&original, tau)?);
    Ok(ScalingDefect {
        tau,
        defect,
        self_convergence,
    })
}

// ---- manufactured states ------------------------------------------------------------

/// Parameters of the acoustic and advection problems: weak viscosity, `rho_bar = 1`.
pub fn acoustic_params() -> PhysParams {
    PhysParams {
        rho_bar: 1.0,
        mu1: 0.01,
        ..PhysParams::default()
    }
}

/// Plane acoustic mode `rho = rho_bar (1 + eps cos(k x))`, `u = 0`, `d = e`.
pub fn acoustic_state(grid: Grid, p: &PhysParams, eps: f64, k: f64) -> Result<State, FieldError> {
    Ok(State {
        rho: ScalarField::from_fn(grid, |x| p.rho_bar * (1.0 + eps * (k * x[0]).cos())),
        u: VectorField::zeros(grid),
        d: DirectorField::uniform(grid, p.e)?,
        t: 0.0,
    })
}

/// Exact linear acoustic solution `(R(t), U(t))` for `rho' = R cos(kx)`, `u_x = U sin(kx)`
/// with damping `nu_l = (2 mu1 + mu2) rho_bar^(alpha-1)`.
pub fn acoustic_linear_solution(p: &PhysParams, k: f64, r0: f64, u0: f64, t: f64) -> (f64, f64) {
    let rb = p.rho_bar;
    let c2 = p.a * p.gamma * rb.powf(p.gamma - 1.0);
    let nu = p.longitudinal() * rb.powf(p.alpha - 1.0);
    // M = [[0, -rb k], [c2 k / rb, -nu k^2]]
    let m = [[0.0, -rb * k], [c2 * k / rb, -nu * k * k]];
    let s = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = s * s - det;
    let (ch, sh) = if disc < 0.0 {
        let w = (-disc).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else if disc > 0.0 {
        let q = disc.sqrt();
        ((q * t).cosh(), (q * t).sinh() / q)
    } else {
        (1.0, t)
    };
    let e = (s * t).exp();
    let a = [[ch + sh * (m[0][0] - s), sh * m[0][1]], [sh * m[1][0], ch + sh * (m[1][1] - s)]];
    (e * (a[0][0] * r0 + a[0][1] * u0), e * (a[1][0] * r0 + a[1][1] * u0))
}

/// `d = (cos(k z), sin(k z), 0)`: a harmonic map to the sphere, stationary with `u = 0`.
pub fn geodesic_twist(grid: Grid, k: f64) -> Result<DirectorField, FieldError> {
    DirectorField::normalized(VectorField::from_fn(grid, |x| [(k * x[2]).cos(), (k * x[2]).sin(), 0.0]))
}

/// Smooth state with every field varying in all three directions.
pub fn manufactured_state(grid: Grid, p: &PhysParams) -> Result<State, FieldError> {
    let rho = ScalarField::from_fn(grid, |x| p.rho_bar * (1.0 + 0.1 * x[0].sin() * x[1].cos() + 0.05 * (x[2] + x[0]).cos()));
    let u = VectorField::from_fn(grid, |x| {
        [
            0.2 * x[1].sin() * x[2].cos() + 0.1 * x[0].sin(),
            0.2 * x[2].sin() * x[0].cos() - 0.05 * (x[1] + x[2]).cos(),
            0.2 * x[0].sin() * x[1].cos() + 0.1 * x[2].cos(),
        ]
    });
    let d = DirectorField::normalized(VectorField::from_fn(grid, |x| {
        [
            p.e[0] + 0.3 * (x[1] + x[2]).sin(),
            p.e[1] + 0.3 * x[0].cos() * x[2].sin(),
            p.e[2] + 0.3 * x[0].sin() * x[1].cos(),
        ]
    }))?;
    Ok(State { rho, u, d, t: 0.0 })
}

// ---- studies -------------------------------------------------------------------------------

fn require_levels(got: usize, needed: usize) -> Result<(), StudyError> {
    if got < needed {
        Err(StudyError::TooFewLevels { needed, got })
    } else {
        Ok(())
    }
}

/// Temporal self-convergence: runs with `base_steps * 2^i` steps to `t_final`
/// and reports `|| y_dt - y_{dt/2} ||` for each of `levels` step sizes.
pub fn temporal_self_convergence(
    calc: &Calculus,
    init: &State,
    p: &PhysParams,
    projection: Projection,
    t_final: f64,
    base_steps: usize,
    levels: usize,
) -> Result<ConvergenceTable, StudyError> {
    require_levels(levels, 3)?;
    let finals = (0..=levels)
        .map(|i| {
            let n = base_steps << i;
            evolve(calc, init, p, projection, t_final / n as f64, n)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = (0..levels)
        .map(|i| {
            let n = base_steps << i;
            ConvergenceRow {
                label: format!("steps={n}"),
                h: t_final / n as f64,
                error: state_distance(&finals[i], &finals[i + 1]),
            }
        })
        .collect();
    Ok(ConvergenceTable::new("temporal self-convergence (RK4)", rows))
}

/// Temporal order on a finite-amplitude acoustic mode in spectral mode.
pub fn acoustic_temporal_order(n: usize) -> Result<ConvergenceTable, StudyError> {
    let p = acoustic_params();
    let grid = Grid::new([n, 4, 4], [2.0 * PI; 3])?;
    let calc = Calculus::new(grid, CalculusMode::Spectral);
    let init = acoustic_state(grid, &p, 0.05, 1.0)?;
    let mut t = temporal_self_convergence(&calc, &init, &p, Projection::PerStep, 1.0, 10, 3)?;
    t.title = format!("temporal self-convergence, acoustic mode, spectral {n}x4x4");
    Ok(t)
}

fn ladder_grid(n: usize) -> Result<Grid, FieldError> {
    Grid::new([n, 4, 4], [2.0 * PI; 3])
}

/// Density transported by a constant velocity (pressure switched off), FD mode.
pub fn advection_convergence(ns: &[usize], mode: CalculusMode) -> Result<ConvergenceTable, StudyError> {
    require_levels(ns.len(), 3)?;
    let p = PhysParams {
        a: 1e-12,
        ..acoustic_params()
    };
    let (c, amp, t_final, dt) = (0.5, 0.1, 1.0f64, 0.01);
    let steps = (t_final / dt).round() as usize;
    let mut rows = Vec::new();
    for &n in ns {
        let grid = ladder_grid(n)?;
        let calc = Calculus::new(grid, mode);
        let init = State {
            rho: ScalarField::from_fn(grid, |x| p.rho_bar * (1.0 + amp * x[0].sin())),
            u: VectorField::constant(grid, [c, 0.0, 0.0]),
            d: DirectorField::uniform(grid, p.e)?,
            t: 0.0,
        };
        let out = evolve(&calc, &init, &p, Projection::PerStep, dt, steps)?;
        let exact = ScalarField::from_fn(grid, |x| p.rho_bar * (1.0 + amp * (x[0] - c * t_final).sin()));
        let cell = grid.cell_volume();
        let reference = l2(&init.rho.data().iter().map(|r| r - p.rho_bar).collect::<Vec<_>>(), cell);
        rows.push(ConvergenceRow {
            label: format!("N={n}"),
            h: grid.spacing()[0],
            error: l2(&diff_sq(out.rho.data(), exact.data()), cell) / reference,
        });
    }
    Ok(ConvergenceTable::new(format!("advection of density ({mode})"), rows))
}

/// Small-amplitude acoustic mode against the exact damped linear solution.
pub fn acoustic_convergence(ns: &[usize], mode: CalculusMode) -> Result<ConvergenceTable, StudyError> {
    require_levels(ns.len(), 3)?;
    let p = acoustic_params();
    let (eps, k, t_final, dt) = (1e-6, 1.0, 1.0f64, 0.005);
    let steps = (t_final / dt).round() as usize;
    let (r, u) = acoustic_linear_solution(&p, k, eps * p.rho_bar, 0.0, t_final);
    let mut rows = Vec::new();
    for &n in ns {
        let grid = ladder_grid(n)?;
        let calc = Calculus::new(grid, mode);
        let init = acoustic_state(grid, &p, eps, k)?;
        let out = evolve(&calc, &init, &p, Projection::PerStep, dt, steps)?;
        let cell = grid.cell_volume();
        let want_rho: Vec<f64> = (0..grid.len()).map(|i| r * (k * grid.position(i)[0]).cos()).collect();
        let want_u: Vec<f64> = (0..grid.len()).map(|i| u * (k * grid.position(i)[0]).sin()).collect();
        let got_rho: Vec<f64> = out.rho.data().iter().map(|x| x - p.rho_bar).collect();
        let num = l2(&diff_sq(&got_rho, &want_rho), cell).powi(2)
            + l2(&diff_sq(out.u.component(0), &want_u), cell).powi(2)
            + l2(out.u.component(1), cell).powi(2)
            + l2(out.u.component(2), cell).powi(2);
        let den = l2(&want_rho, cell).powi(2) + l2(&want_u, cell).powi(2);
        rows.push(ConvergenceRow {
            label: format!("N={n}"),
            h: grid.spacing()[0],
            error: (num / den).sqrt(),
        });
    }
    Ok(ConvergenceTable::new(format!("linear acoustic mode ({mode})"), rows))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyCheck {
    pub measured: f64,
    /// `sqrt(a gamma rho_bar^(gamma-1)) k`.
    pub predicted: f64,
    pub relative_error: f64,
}

/// Measures the acoustic angular frequency from two zero crossings of the mode amplitude.
pub fn acoustic_frequency(n: usize, mode: CalculusMode, p: &PhysParams) -> Result<FrequencyCheck, StudyError> {
    let k = 1.0;
    let eps = 1e-4;
    let grid = ladder_grid(n)?;
    let calc = Calculus::new(grid, mode);
    let predicted = (p.a * p.gamma * p.rho_bar.powf(p.gamma - 1.0)).sqrt() * k;
    let period = 2.0 * PI / predicted;
    let dt = period / 400.0;
    let amplitude = |s: &State| -> f64 {
        let sum: f64 = (0..grid.len())
            .map(|i| (s.rho.data()[i] - p.rho_bar) * (k * grid.position(i)[0]).cos())
            .sum();
        2.0 * sum / grid.len() as f64
    };
    let mut s = acoustic_state(grid, p, eps, k)?;
    let mut prev = (s.t, amplitude(&s));
    let mut crossings = Vec::new();
    while crossings.len() < 2 && s.t < 2.0 * period {
        s = step_with_dt(&calc, &s, p, Projection::PerStep, dt)?.state;
        let cur = (s.t, amplitude(&s));
        if prev.1.signum() != cur.1.signum() {
            crossings.push(prev.0 + (cur.0 - prev.0) * prev.1 / (prev.1 - cur.1));
        }
        prev = cur;
    }
    let measured = if crossings.len() == 2 {
        PI / (crossings[1] - crossings[0])
    } else {
        f64::NAN
    };
    Ok(FrequencyCheck {
        measured,
        predicted,
        relative_error: (measured - predicted).abs() / predicted,
    })
}

/// Largest deviation of a geodesic-twist state from itself after `steps` steps.
pub fn twist_stationarity(grid: Grid, mode: CalculusMode, steps: usize, dt: f64) -> Result<f64, StudyError> {
    let p = PhysParams::default();
    let calc = Calculus::new(grid, mode);
    let init = State {
        rho: ScalarField::constant(grid, p.rho_bar),
        u: VectorField::zeros(grid),
        d: geodesic_twist(grid, 1.0)?,
        t: 0.0,
    };
    let out = evolve(&calc, &init, &p, Projection::PerStep, dt, steps)?;
    let mut dev = 0.0f64;
    for (a, b) in out.rho.data().iter().zip(init.rho.data()) {
        dev = dev.max((a - b).abs() / p.rho_bar);
    }
    for c in 0..3 {
        for v in out.u.component(c) {
            dev = dev.max(v.abs());
        }
        for (a, b) in out.d.as_vector().component(c).iter().zip(init.d.as_vector().component(c)) {
            dev = dev.max((a - b).abs());
        }
    }
    Ok(dev)
}

/// Flux-identity residual of [`manufactured_state`] on cubes of the given sizes.
pub fn flux_refinement(ns: &[usize], mode: CalculusMode, p: &PhysParams) -> Result<ConvergenceTable, StudyError> {
    require_levels(ns.len(), 3)?;
    let mut rows = Vec::new();
    for &n in ns {
        let grid = Grid::cube(n)?;
        let calc = Calculus::new(grid, mode);
        let state = manufactured_state(grid, p)?;
        rows.push(ConvergenceRow {
            label: format!("N={n}"),
            h: grid.spacing()[0],
            error: flux_residual(&calc, &state, p)?,
        });
    }
    Ok(ConvergenceTable::new(format!("flux identity residual ({mode})"), rows))
}
