//! Time integration: admissible initial data, the stable step size, classical
//! RK4 with director projection, and the monitored run loop.

use std::fmt;
use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::calculus::Calculus;
use crate::diagnostics::{observe, BootstrapReport, Readings, RunRecord};
use crate::error::{FieldError, NodeLocation, SnapshotError};
use crate::field::{project_to_sphere, same_grid, DirectorField, Field, ScalarField, VectorField};
use crate::grid::Grid;
use crate::model::{power, rhs_unchecked, FieldsRef, ParamError, PhysParams, State, Tendency};
use crate::norms::lp_of_magnitudes;
use crate::random::{band_limited, check_cutoff, normalize_sup};
use crate::snapshot::{read_field, write_field};

/// Fraction of the RK4 imaginary-axis stability limit reached at `cfl = 1`
/// for the advective-acoustic bound.
pub const ADVECTIVE_STABILITY: f64 = 0.75;
/// Same for the diffusive bounds (real-axis limit over the largest discrete Laplacian eigenvalue).
pub const DIFFUSIVE_STABILITY: f64 = 0.2;
/// Step sizes below this are reported as a blow-up.
pub const DT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    PerStage,
    #[default]
    PerStep,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Projection::PerStage => "per_stage",
            Projection::PerStep => "per_step",
        })
    }
}

impl FromStr for Projection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per_stage" => Ok(Self::PerStage),
            "per_step" => Ok(Self::PerStep),
            _ => Err(format!("expected per_stage or per_step, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub projection: Projection,
    pub blowup_gradu_threshold: f64,
    /// `(lo, hi)` multipliers of `rho_bar`.
    pub density_band: (f64, f64),
    /// Fixed step size, bypassing [`stable_dt`].
    pub dt_override: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            dt_max: 1e-2,
            t_end: 1.0,
            projection: Projection::PerStep,
            blowup_gradu_threshold: 1e3,
            density_band: (2.0 / 3.0, 4.0 / 3.0),
            dt_override: None,
        }
    }
}

fn perr(key: &'static str, message: impl Into<String>) -> ParamError {
    ParamError {
        key,
        message: message.into(),
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(perr("cfl", format!("must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(perr("dt_max", "must be positive"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(perr("t_end", "must be positive"));
        }
        if !(self.blowup_gradu_threshold > 0.0) {
            return Err(perr("blowup_gradu", "must be positive"));
        }
        let (lo, hi) = self.density_band;
        if !(lo > 0.0 && lo < 1.0 && hi > 1.0 && hi.is_finite()) {
            return Err(perr("band_lo", format!("density band must satisfy 0 < lo < 1 < hi, got ({lo}, {hi})")));
        }
        if let Some(dt) = self.dt_override {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(perr("dt_override", "must be positive"));
            }
        }
        Ok(())
    }
}

// ---- initial data -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    /// Relative density perturbation, in `[0, 1/4]`.
    pub rho_amplitude: f64,
    /// Pointwise maximum of `|u0|`.
    pub velocity_amplitude: f64,
    /// Target `|| grad d0 ||_{L^3}`.
    pub grad_d_target: f64,
    pub mode_cutoff: usize,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            rho_amplitude: 0.1,
            velocity_amplitude: 0.0,
            grad_d_target: 0.0,
            mode_cutoff: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("{key}: {message}")]
    Spec { key: &'static str, message: String },
    #[error("director gradient target {target} unreachable on this grid; achievable range [0, {max_seen:.6e}]")]
    Unreachable { target: f64, max_seen: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl InitSpec {
    pub fn validate(&self, grid: &Grid) -> Result<(), InitError> {
        let bad = |key, message: String| Err(InitError::Spec { key, message });
        if !(0.0..=0.25).contains(&self.rho_amplitude) {
            return bad(
                "rho_amplitude",
                format!("must lie in [0, 0.25] so that 3/4 rho_bar <= rho0 <= 5/4 rho_bar, got {}", self.rho_amplitude),
            );
        }
        if !(self.velocity_amplitude >= 0.0 && self.velocity_amplitude.is_finite()) {
            return bad("velocity_amplitude", format!("must be finite and nonnegative, got {}", self.velocity_amplitude));
        }
        if !(self.grad_d_target >= 0.0 && self.grad_d_target.is_finite()) {
            return bad("grad_d_target", format!("must be finite and nonnegative, got {}", self.grad_d_target));
        }
        check_cutoff(grid, self.mode_cutoff).map_err(|e| InitError::Spec {
            key: "mode_cutoff",
            message: e.to_string(),
        })
    }
}

const INIT_SLOPE: f64 = 1.0;
const BISECTION_LIMIT: usize = 50;

fn director_from(grid: Grid, e: [f64; 3], psi: &[Vec<f64>; 3], s: f64) -> Result<DirectorField, FieldError> {
    let comps = std::array::from_fn(|c| psi[c].iter().map(|v| e[c] + s * v).collect());
    DirectorField::normalized(VectorField::from_components(grid, comps)?)
}

fn grad_l3(calc: &Calculus, d: &DirectorField) -> f64 {
    let j = calc.jacobian_unchecked(d.as_vector());
    let mags: Vec<f64> = (0..d.grid().len()).map(|n| j.magnitude_at(n)).collect();
    lp_of_magnitudes(&mags, 3.0, d.grid().cell_volume())
}

/// Seeded band-limited initial state.
///
/// `rho0 = rho_bar (1 + A psi / max|psi|)`, `u0 = U psi_u / max|psi_u|` and
/// `d0 = normalize(e + s psi_d)` with `s` found by bracketing and bisection so
/// that `|| grad d0 ||_{L^3}` is within 1% of the target.
pub fn build_initial_data(calc: &Calculus, p: &PhysParams, spec: &InitSpec) -> Result<State, InitError> {
    let grid = *calc.grid();
    spec.validate(&grid)?;
    p.validate().map_err(|e| InitError::Spec {
        key: e.key,
        message: e.message,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.mode_cutoff;
    let mut draw = || band_limited(&grid, k, INIT_SLOPE, &mut rng);
    let mut psi_rho = draw()?;
    let psi_u = [draw()?, draw()?, draw()?];
    let mut psi_d = [draw()?, draw()?, draw()?];

    normalize_sup(&mut psi_rho);
    let (lo, hi) = (0.75 * p.rho_bar, 1.25 * p.rho_bar);
    let rho: Vec<f64> = psi_rho
        .iter()
        .map(|v| (p.rho_bar * (1.0 + spec.rho_amplitude * v)).clamp(lo, hi))
        .collect();

    let u = if spec.velocity_amplitude == 0.0 {
        VectorField::zeros(grid)
    } else {
        let raw = VectorField::from_components(grid, psi_u)?;
        let m = raw.magnitude().max();
        let c = if m > 0.0 { spec.velocity_amplitude / m } else { 0.0 };
        raw.scaled(c)
    };

    let d = if spec.grad_d_target == 0.0 {
        DirectorField::uniform(grid, p.e)?
    } else {
        let m = VectorField::from_components(grid, psi_d.clone())?.magnitude().max();
        if m > 0.0 {
            psi_d.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v /= m));
        }
        solve_director_amplitude(calc, p.e, &psi_d, spec.grad_d_target)?
    };

    Ok(State {
        rho: ScalarField::from_vec(grid, rho)?,
        u,
        d,
        t: 0.0,
    })
}

fn solve_director_amplitude(
    calc: &Calculus,
    e: [f64; 3],
    psi: &[Vec<f64>; 3],
    target: f64,
) -> Result<DirectorField, InitError> {
    let grid = *calc.grid();
    let eval = |s: f64| -> Option<(DirectorField, f64)> {
        let d = director_from(grid, e, psi, s).ok()?;
        let g = grad_l3(calc, &d);
        g.is_finite().then_some((d, g))
    };
    let probe = 1e-3;
    let (_, g_probe) = eval(probe).ok_or(InitError::Unreachable { target, max_seen: 0.0 })?;
    if g_probe <= 0.0 {
        return Err(InitError::Unreachable { target, max_seen: 0.0 });
    }
    let mut s = (probe * target / g_probe).min(1e4);
    let (mut lo, mut hi) = (0.0f64, None::<f64>);
    let mut max_seen = g_probe;
    for _ in 0..BISECTION_LIMIT {
        match eval(s) {
            Some((d, g)) => {
                max_seen = max_seen.max(g);
                if (g - target).abs() <= 0.01 * target {
                    return Ok(d);
                }
                if g < target {
                    lo = s;
                } else {
                    hi = Some(s);
                }
            }
            None => hi = Some(s),
        }
        s = match hi {
            Some(h) => 0.5 * (lo + h),
            None => 2.0 * s,
        };
        if s > 1e6 {
            break;
        }
    }
    Err(InitError::Unreachable { target, max_seen })
}

// ---- stepping -------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("non-finite {field} at t = {t} ({at})")]
    NonFinite {
        field: &'static str,
        t: f64,
        at: NodeLocation,
    },
    #[error("density left the positive cone at t = {t}: {value} at {at}")]
    Vacuum { t: f64, value: f64, at: NodeLocation },
    #[error("step size {dt:e} underflowed at t = {t}")]
    DtUnderflow { dt: f64, t: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `cfl * min(0.75 h / (|u|_inf + c_s), 0.2 h^2 rho_min / ((2 mu1 + mu2) rho_max^alpha), 0.2 h^2 / lambda)`,
/// capped by `dt_max`, with `c_s = sqrt(a gamma rho_max^(gamma - 1))`.
pub fn stable_dt(calc: &Calculus, state: &State, p: &PhysParams, config: &SolverConfig) -> Result<f64, StepError> {
    same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let h = state.grid().min_spacing();
    let umax = state.u.magnitude().max();
    let (rmin, rmax) = (state.rho.min(), state.rho.max());
    let cs = sound_speed(rmax, p);
    let bounds = [
        ADVECTIVE_STABILITY * h / (umax + cs),
        DIFFUSIVE_STABILITY * h * h * rmin / (p.longitudinal() * power(rmax, p.alpha)),
        DIFFUSIVE_STABILITY * h * h / p.lambda,
    ];
    let dt = (config.cfl * bounds.into_iter().fold(f64::INFINITY, f64::min)).min(config.dt_max);
    if !(dt >= DT_FLOOR) {
        return Err(StepError::DtUnderflow { dt, t: state.t });
    }
    Ok(dt)
}

/// `sqrt(a gamma rho^(gamma - 1))`.
pub fn sound_speed(rho: f64, p: &PhysParams) -> f64 {
    (p.a * p.gamma * power(rho, p.gamma - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: State,
    pub dt: f64,
    /// Largest `| |d| - 1 |` removed by the final projection.
    pub projection_correction: f64,
}

struct Stage {
    rho: ScalarField,
    u: VectorField,
    d: VectorField,
}

impl Stage {
    fn view(&self) -> FieldsRef<'_> {
        FieldsRef {
            rho: &self.rho,
            u: &self.u,
            d: &self.d,
        }
    }
}

fn axpy(base: &[f64], c: f64, k: &[f64]) -> Vec<f64> {
    base.iter().zip(k).map(|(b, v)| b + c * v).collect()
}

fn axpy_vec(base: &VectorField, c: f64, k: &VectorField) -> VectorField {
    let comps = std::array::from_fn(|i| axpy(base.component(i), c, k.component(i)));
    VectorField::from_components(*base.grid(), comps).expect("same grid")
}

fn advance(state: &State, c: f64, k: &Tendency) -> Stage {
    Stage {
        rho: ScalarField::from_vec(*state.grid(), axpy(state.rho.data(), c, k.rho.data())).expect("same grid"),
        u: axpy_vec(&state.u, c, &k.u),
        d: axpy_vec(state.d.as_vector(), c, &k.d),
    }
}

fn check_tendency(k: &Tendency, t: f64) -> Result<(), StepError> {
    let named: [(&'static str, Option<NodeLocation>); 3] = [
        ("density", k.rho.first_nonfinite()),
        ("velocity", k.u.first_nonfinite()),
        ("director", k.d.first_nonfinite()),
    ];
    for (field, at) in named {
        if let Some(at) = at {
            return Err(StepError::NonFinite { field, t, at });
        }
    }
    Ok(())
}

fn project(v: &mut VectorField, t: f64) -> Result<f64, StepError> {
    project_to_sphere(v).map_err(|e| match e {
        FieldError::NonFinite { at, .. } => StepError::NonFinite {
            field: "director",
            t,
            at,
        },
        other => StepError::Field(other),
    })
}

/// One classical RK4 step of size `dt`.
pub fn step_with_dt(
    calc: &Calculus,
    state: &State,
    p: &PhysParams,
    projection: Projection,
    dt: f64,
) -> Result<StepReport, StepError> {
    same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let t = state.t;
    let eval = |s: FieldsRef| -> Result<Tendency, StepError> {
        let k = rhs_unchecked(calc, s, p);
        check_tendency(&k, t)?;
        Ok(k)
    };
    let stage = |c: f64, k: &Tendency| -> Result<Stage, StepError> {
        let mut s = advance(state, c, k);
        if projection == Projection::PerStage {
            project(&mut s.d, t)?;
        }
        Ok(s)
    };
    let k1 = eval(state.view())?;
    let s2 = stage(0.5 * dt, &k1)?;
    let k2 = eval(s2.view())?;
    drop(s2);
    let s3 = stage(0.5 * dt, &k2)?;
    let k3 = eval(s3.view())?;
    drop(s3);
    let s4 = stage(dt, &k3)?;
    let k4 = eval(s4.view())?;
    drop(s4);

    let w = dt / 6.0;
    let combine = |y: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..y.len())
            .map(|n| y[n] + w * (a[n] + 2.0 * b[n] + 2.0 * c[n] + d[n]))
            .collect()
    };
    let grid = *state.grid();
    let rho = combine(state.rho.data(), k1.rho.data(), k2.rho.data(), k3.rho.data(), k4.rho.data());
    let u: [Vec<f64>; 3] = std::array::from_fn(|i| {
        combine(state.u.component(i), k1.u.component(i), k2.u.component(i), k3.u.component(i), k4.u.component(i))
    });
    let dv: [Vec<f64>; 3] = std::array::from_fn(|i| {
        combine(
            state.d.as_vector().component(i),
            k1.d.component(i),
            k2.d.component(i),
            k3.d.component(i),
            k4.d.component(i),
        )
    });
    let t_new = t + dt;
    let rho = ScalarField::from_vec(grid, rho)?;
    let u = VectorField::from_components(grid, u)?;
    let mut dvec = VectorField::from_components(grid, dv)?;
    for (field, at) in [("density", rho.first_nonfinite()), ("velocity", u.first_nonfinite())] {
        if let Some(at) = at {
            return Err(StepError::NonFinite { field, t: t_new, at });
        }
    }
    if let Some(idx) = rho.data().iter().position(|&r| r <= 0.0) {
        return Err(StepError::Vacuum {
            t: t_new,
            value: rho.data()[idx],
            at: NodeLocation {
                node: grid.unravel(idx),
                component: 0,
            },
        });
    }
    let correction = project(&mut dvec, t_new)?;
    let d = DirectorField::from_stored(dvec);
    Ok(StepReport {
        state: State { rho, u, d, t: t_new },
        dt,
        projection_correction: correction,
    })
}

/// One step with `dt_override` or [`stable_dt`].
pub fn step(calc: &Calculus, state: &State, p: &PhysParams, config: &SolverConfig) -> Result<StepReport, StepError> {
    let dt = match config.dt_override {
        Some(dt) => dt,
        None => stable_dt(calc, state, p, config)?,
    };
    step_with_dt(calc, state, p, config.projection, dt)
}

// ---- run loop -----------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlowUpReason {
    NonFinite { field: &'static str },
    DensityBand { min: f64, max: f64 },
    GradU { value: f64 },
    DtUnderflow { dt: f64 },
    Vacuum,
}

impl BlowUpReason {
    /// Bit recorded in the `blowup_flags` column.
    pub fn flag(&self) -> u32 {
        match self {
            BlowUpReason::NonFinite { .. } => 1,
            BlowUpReason::DensityBand { .. } | BlowUpReason::Vacuum => 2,
            BlowUpReason::GradU { .. } => 4,
            BlowUpReason::DtUnderflow { .. } => 8,
        }
    }

    /// Short tag used in CSV outputs.
    pub fn tag(&self) -> &'static str {
        match self {
            BlowUpReason::NonFinite { .. } => "nonfinite",
            BlowUpReason::DensityBand { .. } => "density_band",
            BlowUpReason::GradU { .. } => "grad_u",
            BlowUpReason::DtUnderflow { .. } => "dt_underflow",
            BlowUpReason::Vacuum => "vacuum",
        }
    }
}

impl fmt::Display for BlowUpReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlowUpReason::NonFinite { field } => write!(f, "non-finite {field}"),
            BlowUpReason::DensityBand { min, max } => write!(f, "density left the band: min {min:e}, max {max:e}"),
            BlowUpReason::GradU { value } => write!(f, "|grad u|_inf = {value:e} above threshold"),
            BlowUpReason::DtUnderflow { dt } => write!(f, "step size underflow ({dt:e})"),
            BlowUpReason::Vacuum => f.write_str("vacuum (nonpositive density)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    Completed,
    BlewUp { t: f64, reason: BlowUpReason },
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunOutcome::Completed)
    }
}

/// Receives run records and, optionally, every accepted state.
pub trait RunObserver {
    fn record(&mut self, record: &RunRecord) -> io::Result<()>;

    /// Called after each accepted step with the global step index.
    fn after_step(&mut self, _step: u64, _state: &State) -> io::Result<()> {
        Ok(())
    }
}

impl RunObserver for Vec<RunRecord> {
    fn record(&mut self, record: &RunRecord) -> io::Result<()> {
        self.push(*record);
        Ok(())
    }
}

impl<W: Write> RunObserver for crate::diagnostics::RecordWriter<W> {
    fn record(&mut self, record: &RunRecord) -> io::Result<()> {
        self.write(record)
    }
}

/// Writes a checkpoint every `every` steps into `dir`.
pub struct CheckpointWriter {
    dir: PathBuf,
    every: u64,
    digest: String,
    pub written: Vec<PathBuf>,
}

impl CheckpointWriter {
    pub fn new(dir: impl Into<PathBuf>, every: u64, p: &PhysParams) -> Self {
        Self {
            dir: dir.into(),
            every: every.max(1),
            digest: p.digest(),
            written: Vec::new(),
        }
    }

    pub fn path_for(dir: &Path, step: u64) -> PathBuf {
        dir.join(format!("checkpoint_{step:08}.bin"))
    }
}

impl RunObserver for CheckpointWriter {
    fn record(&mut self, _record: &RunRecord) -> io::Result<()> {
        Ok(())
    }

    fn after_step(&mut self, step: u64, state: &State) -> io::Result<()> {
        if step % self.every == 0 {
            let path = Self::path_for(&self.dir, step);
            write_checkpoint_with_digest(&path, state, step, &self.digest)?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Cadence, interpretation flags and the global index of the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunControl {
    /// Records are emitted at the start, every `cadence` global steps and at termination.
    pub cadence: u64,
    pub readings: Readings,
    /// Global step index of `init` (nonzero when resuming).
    pub start_step: u64,
}

impl Default for RunControl {
    fn default() -> Self {
        Self {
            cadence: 1,
            readings: Readings::default(),
            start_step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub outcome: RunOutcome,
    pub final_state: State,
    /// Global index of the last accepted step.
    pub steps: u64,
    pub bootstrap: BootstrapReport,
    /// Density stayed within the configured band at every record.
    pub band_respected: bool,
    /// `|| grad d ||_{L^3}` at the first record.
    pub initial_grad_d_l3: f64,
    pub max_projection_correction: f64,
    pub records: usize,
    pub last_record: Option<RunRecord>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run input: {0}")]
    Invalid(String),
    #[error("observer I/O failed at t = {}", .partial.final_state.t)]
    Io {
        source: io::Error,
        partial: Box<RunSummary>,
    },
}

struct Tracker<'a> {
    observers: &'a mut [&'a mut dyn RunObserver],
    bootstrap: BootstrapReport,
    band_respected: bool,
    initial_grad_d_l3: Option<f64>,
    records: usize,
    last: Option<RunRecord>,
}

impl Tracker<'_> {
    fn emit(&mut self, mut record: RunRecord, sample: Option<&crate::diagnostics::TickSample>, flags: u32) -> io::Result<()> {
        record.blowup_flags = flags;
        if let Some(s) = sample {
            self.bootstrap.absorb(s);
        }
        self.initial_grad_d_l3.get_or_insert(record.grad_d_l3);
        self.records += 1;
        self.last = Some(record);
        for o in self.observers.iter_mut() {
            o.record(&record)?;
        }
        Ok(())
    }
}

fn band_of(rho: &ScalarField) -> (f64, f64) {
    (rho.min(), rho.max())
}

fn grad_u_linf(calc: &Calculus, u: &VectorField) -> f64 {
    let j = calc.jacobian_unchecked(u);
    (0..u.grid().len()).map(|n| j.magnitude_at(n)).fold(0.0, f64::max)
}

/// Integrates from `init` to `config.t_end` or the first blow-up trigger.
pub fn run<'a>(
    calc: &Calculus,
    init: State,
    p: &PhysParams,
    config: &SolverConfig,
    control: RunControl,
    observers: &'a mut [&'a mut dyn RunObserver],
) -> Result<RunSummary, RunError> {
    config.validate().map_err(|e| RunError::Invalid(e.to_string()))?;
    p.validate().map_err(|e| RunError::Invalid(e.to_string()))?;
    same_grid(calc.grid(), init.grid()).map_err(|e| RunError::Invalid(e.to_string()))?;
    init.validate().map_err(|e| RunError::Invalid(e.to_string()))?;
    let cadence = control.cadence.max(1);
    let band = (config.density_band.0 * p.rho_bar, config.density_band.1 * p.rho_bar);
    let mut tracker = Tracker {
        observers,
        bootstrap: BootstrapReport::new(p, control.readings),
        band_respected: true,
        initial_grad_d_l3: None,
        records: 0,
        last: None,
    };
    let mut state = init;
    let mut step_index = control.start_step;
    let mut max_corr = 0.0f64;


    macro_rules! finish {
        ($outcome:expr) => {
            RunSummary {
                outcome: $outcome,
                final_state: state.clone(),
                steps: step_index,
                bootstrap: tracker.bootstrap.clone(),
                band_respected: tracker.band_respected,
                initial_grad_d_l3: tracker.initial_grad_d_l3.unwrap_or(0.0),
                max_projection_correction: max_corr,
                records: tracker.records,
                last_record: tracker.last,
            }
        };
    }
    macro_rules! io_try {
        ($e:expr, $outcome:expr) => {
            if let Err(source) = $e {
                return Err(RunError::Io {
                    source,
                    partial: Box::new(finish!($outcome)),
                });
            }
        };
    }

    let in_band = |rho: &ScalarField| {
        let (mn, mx) = band_of(rho);
        mn > band.0 && mx < band.1
    };

    let obs = observe(calc, &state, p, control.readings, 0.0).map_err(|e| RunError::Invalid(e.to_string()))?;
    if !in_band(&state.rho) {
        tracker.band_respected = false;
        let (min, max) = band_of(&state.rho);
        let reason = BlowUpReason::DensityBand { min, max };
        let outcome = RunOutcome::BlewUp { t: state.t, reason };
        io_try!(tracker.emit(obs.record, Some(&obs.sample), reason.flag()), outcome);
        return Ok(finish!(outcome));
    }
    io_try!(tracker.emit(obs.record, Some(&obs.sample), 0), RunOutcome::Completed);

    let t_end = config.t_end;
    let tol = 1e-12 * t_end.max(1.0);
    while t_end - state.t > tol {
        let dt = match config.dt_override {
            Some(dt) => Ok(dt),
            None => stable_dt(calc, &state, p, config),
        };
        let result = dt.and_then(|dt| {
            let dt = dt.min(t_end - state.t);
            step_with_dt(calc, &state, p, config.projection, dt)
        });
        let report = match result {
            Ok(r) => r,
            Err(err) => {
                let reason = match &err {
                    StepError::NonFinite { field, .. } => BlowUpReason::NonFinite { field },
                    StepError::Vacuum { .. } => BlowUpReason::Vacuum,
                    StepError::DtUnderflow { dt, .. } => BlowUpReason::DtUnderflow { dt: *dt },
                    StepError::Field(FieldError::NonFinite { field, .. }) => BlowUpReason::NonFinite { field },
                    StepError::Field(_) => BlowUpReason::NonFinite { field: "state" },
                };
                if matches!(reason, BlowUpReason::Vacuum) {
                    tracker.band_respected = false;
                }
                let outcome = RunOutcome::BlewUp { t: state.t, reason };
                if let Some(mut rec) = tracker.last {
                    rec.blowup_flags = reason.flag();
                    for o in tracker.observers.iter_mut() {
                        io_try!(o.record(&rec), outcome);
                    }
                    tracker.records += 1;
                    tracker.last = Some(rec);
                }
                return Ok(finish!(outcome));
            }
        };
        max_corr = max_corr.max(report.projection_correction);
        let last_dt = report.dt;
        state = report.state;
        step_index += 1;
        for o in tracker.observers.iter_mut() {
            io_try!(o.after_step(step_index, &state), RunOutcome::Completed);
        }

        let mut trigger = None;
        let (mn, mx) = band_of(&state.rho);
        if !in_band(&state.rho) {
            trigger = Some(BlowUpReason::DensityBand { min: mn, max: mx });
        } else {
            let g = grad_u_linf(calc, &state.u);
            if !(g <= config.blowup_gradu_threshold) {
                trigger = Some(BlowUpReason::GradU { value: g });
            }
        }
        let done = t_end - state.t <= tol;
        if trigger.is_some() || done || step_index % cadence == 0 {
            let outcome = match trigger {
                Some(reason) => RunOutcome::BlewUp { t: state.t, reason },
                None => RunOutcome::Completed,
            };
            match observe(calc, &state, p, control.readings, last_dt) {
                Ok(obs) => {
                    if !(mn >= band.0 && mx <= band.1) {
                        tracker.band_respected = false;
                    }
                    let flags = trigger.map_or(0, |r| r.flag());
                    io_try!(tracker.emit(obs.record, Some(&obs.sample), flags), outcome);
                }
                Err(_) => {
                    let reason = BlowUpReason::NonFinite { field: "diagnostics" };
                    return Ok(finish!(RunOutcome::BlewUp { t: state.t, reason }));
                }
            }
            if trigger.is_some() {
                return Ok(finish!(outcome));
            }
        }
    }
    Ok(finish!(RunOutcome::Completed))
}

// ---- checkpoints ----------------------------------------------------------------------

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ELCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A decoded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: State,
    pub step: u64,
    pub digest: String,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint was written with parameters {found}, expected {expected}")]
    ParamsMismatch { expected: String, found: String },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn write_checkpoint_with_digest(path: &Path, state: &State, step: u64, digest: &str) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&state.t.to_le_bytes())?;
        w.write_all(&step.to_le_bytes())?;
        let mut dig = [b' '; 32];
        for (slot, b) in dig.iter_mut().zip(digest.bytes()) {
            *slot = b;
        }
        w.write_all(&dig)?;
        write_field(&mut w, &state.rho)?;
        write_field(&mut w, &state.u)?;
        write_field(&mut w, &state.d)?;
        w.flush()?;
    }
    fs::rename(tmp, path)
}

/// Header (`ELCK`, version, `t`, step, parameter digest) followed by the
/// density, velocity and director snapshots.
pub fn write_checkpoint(path: &Path, state: &State, step: u64, p: &PhysParams) -> io::Result<()> {
    write_checkpoint_with_digest(path, state, step, &p.digest())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if b4 != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let t = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let step = u64::from_le_bytes(b8);
    let mut dig = [0u8; 32];
    r.read_exact(&mut dig)?;
    let digest = String::from_utf8_lossy(&dig).trim_end().to_string();
    let rho = read_field(&mut r)?.into_scalar()?;
    let u = read_field(&mut r)?.into_vector()?;
    let d = read_field(&mut r)?.into_director()?;
    Ok(Checkpoint {
        state: State { rho, u, d, t },
        step,
        digest,
    })
}

/// Reads a checkpoint and checks that it belongs to `p`.
pub fn resume_checkpoint(path: &Path, p: &PhysParams) -> Result<Checkpoint, CheckpointError> {
    let ck = read_checkpoint(path)?;
    let expected = p.digest();
    if ck.digest != expected {
        return Err(CheckpointError::ParamsMismatch {
            expected,
            found: ck.digest,
        });
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CalculusMode;

    fn setup(n: usize) -> (Calculus, PhysParams) {
        (Calculus::new(Grid::cube(n).unwrap(), CalculusMode::Spectral), PhysParams::default())
    }

    #[test]
    fn sound_speed_closed_form() {
        let p = PhysParams {
            a: 1.0,
            gamma: 2.0,
            ..PhysParams::default()
        };
        assert!((sound_speed(1.0, &p) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn advective_bound_halves_with_resolution() {
        let p = PhysParams {
            mu1: 1e-6,
            lambda: 1e-6,
            ..PhysParams::default()
        };
        let cfg = SolverConfig {
            dt_max: 1.0,
            ..SolverConfig::default()
        };
        let dt = |n: usize| {
            let g = Grid::cube(n).unwrap();
            let c = Calculus::new(g, CalculusMode::Spectral);
            stable_dt(&c, &State::equilibrium(g, &p).unwrap(), &p, &cfg).unwrap()
        };
        assert!((dt(8) / dt(16) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitudes_give_equilibrium() {
        let (calc, p) = setup(8);
        let spec = InitSpec {
            rho_amplitude: 0.0,
            ..InitSpec::default()
        };
        let s = build_initial_data(&calc, &p, &spec).unwrap();
        assert_eq!(s, State::equilibrium(*calc.grid(), &p).unwrap());
    }

    #[test]
    fn rejects_out_of_band_amplitude() {
        let (calc, p) = setup(8);
        let spec = InitSpec {
            rho_amplitude: 0.3,
            ..InitSpec::default()
        };
        assert!(matches!(build_initial_data(&calc, &p, &spec), Err(InitError::Spec { key: "rho_amplitude", .. })));
    }

    #[test]
    fn step_keeps_equilibrium_and_unit_norm() {
        let (calc, p) = setup(8);
        let s = State::equilibrium(*calc.grid(), &p).unwrap();
        let r = step(&calc, &s, &p, &SolverConfig::default()).unwrap();
        assert_eq!(r.state.rho, s.rho);
        assert_eq!(r.state.u, s.u);
        assert_eq!(r.state.d, s.d);
        assert!(r.state.t > 0.0);
    }

    #[test]
    fn projection_parses() {
        assert_eq!("per_stage".parse::<Projection>().unwrap(), Projection::PerStage);
        assert_eq!(Projection::PerStep.to_string(), "per_step");
    }
}
