//! Run and sweep configuration files.
//!
//! Grammar: one `section.key = value` per line, `#` starts a comment, blank
//! lines are ignored. Lists are comma separated; `(alpha, gamma)` pairs are
//! written `alpha:gamma`. Unknown keys and repeated keys are errors. Every key
//! can be overridden from the environment as `LCFLOW_<SECTION>_<KEY>` (upper
//! case).
//!
//! | key | default |
//! |---|---|
//! | `physics.rho_bar`, `physics.alpha`, `physics.gamma` | required |
//! | `physics.a` | 1 |
//! | `physics.mu1`, `physics.mu2` | 1, 0 |
//! | `physics.nu`, `physics.lambda` | 1, 1 |
//! | `physics.e` | `0,0,1` |
//! | `physics.q` | 4 |
//! | `physics.mu_reading` | `mu1` (or `longitudinal`) |
//! | `physics.h_reading` | `mu2` (or `lambda`) |
//! | `grid.dims` | required, `N` or `N1,N2,N3` |
//! | `grid.lengths` | `2 pi` per axis |
//! | `grid.mode` | `spectral` (or `fd`) |
//! | `solver.cfl` | 0.5 |
//! | `solver.dt_max` | 0.01 |
//! | `solver.t_end` | 1 |
//! | `solver.projection` | `per_step` (or `per_stage`) |
//! | `solver.blowup_gradu` | 1000 |
//! | `solver.band_lo`, `solver.band_hi` | 2/3, 4/3 |
//! | `solver.dt_override` | `none` |
//! | `solver.checkpoint_every` | 0 (off) |
//! | `init.rho_amplitude` | 0.1 |
//! | `init.velocity_amplitude` | 0 |
//! | `init.grad_d_target` | 0 |
//! | `init.mode_cutoff` | 2 |
//! | `init.seed` | 0 |
//! | `output.dir` | `out` |
//! | `output.cadence` | 1 |
//!
//! Sweep files additionally take `sweep.rho_bar_values`, `sweep.grad_d_targets`,
//! `sweep.alpha_gamma`, `sweep.seeds` (all required) and `sweep.workers`
//! (0 = all cores); there the three physics keys set by the sweep are optional.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::diagnostics::{EnergyWeight, HReading, Readings};
use crate::grid::{CalculusMode, Grid};
use crate::integrator::{InitSpec, Projection, SolverConfig};
use crate::model::{regime_check, PhysParams, RegimeVerdict};

pub const ENV_PREFIX: &str = "LCFLOW";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// `section.key`, or `line N` for syntax errors.
    pub path: String,
    pub message: String,
}

fn cerr(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

const RUN_KEYS: &[&str] = &[
    "physics.rho_bar",
    "physics.alpha",
    "physics.gamma",
    "physics.a",
    "physics.mu1",
    "physics.mu2",
    "physics.nu",
    "physics.lambda",
    "physics.e",
    "physics.q",
    "physics.mu_reading",
    "physics.h_reading",
    "grid.dims",
    "grid.lengths",
    "grid.mode",
    "solver.cfl",
    "solver.dt_max",
    "solver.t_end",
    "solver.projection",
    "solver.blowup_gradu",
    "solver.band_lo",
    "solver.band_hi",
    "solver.dt_override",
    "solver.checkpoint_every",
    "init.rho_amplitude",
    "init.velocity_amplitude",
    "init.grad_d_target",
    "init.mode_cutoff",
    "init.seed",
    "output.dir",
    "output.cadence",
];

const SWEEP_KEYS: &[&str] = &[
    "sweep.rho_bar_values",
    "sweep.grad_d_targets",
    "sweep.alpha_gamma",
    "sweep.seeds",
    "sweep.workers",
];

/// Everything a single run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub physics: PhysParams,
    pub readings: Readings,
    pub grid: Grid,
    pub mode: CalculusMode,
    pub solver: SolverConfig,
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    pub cadence: u64,
}

impl RunConfig {
    pub fn regime(&self) -> RegimeVerdict {
        regime_check(&self.physics)
    }

    /// Human-readable warnings (inadmissible exponents, `rho_bar <= 1`); execution is still allowed.
    pub fn warnings(&self) -> Vec<String> {
        let v = self.regime();
        let mut out: Vec<String> = v
            .failures()
            .into_iter()
            .map(|f| format!("exponent condition {f} fails; outside the analysed regime"))
            .collect();
        if !v.rho_bar_gt_one {
            out.push(format!("rho_bar = {} is not above 1", self.physics.rho_bar));
        }
        out
    }

    /// Effective configuration with every key spelled out; `parse_config` reads it back unchanged.
    pub fn emit(&self) -> String {
        let p = &self.physics;
        let s = &self.solver;
        let i = &self.init;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let dims = self.grid.dims();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("physics.rho_bar", p.rho_bar.to_string());
        kv("physics.alpha", p.alpha.to_string());
        kv("physics.gamma", p.gamma.to_string());
        kv("physics.a", p.a.to_string());
        kv("physics.mu1", p.mu1.to_string());
        kv("physics.mu2", p.mu2.to_string());
        kv("physics.nu", p.nu.to_string());
        kv("physics.lambda", p.lambda.to_string());
        kv("physics.e", list(&p.e));
        kv("physics.q", p.q.to_string());
        kv("physics.mu_reading", self.readings.energy_weight.to_string());
        kv("physics.h_reading", self.readings.h_reading.to_string());
        kv("grid.dims", format!("{},{},{}", dims[0], dims[1], dims[2]));
        kv("grid.lengths", list(&self.grid.lengths()));
        kv("grid.mode", self.mode.to_string());
        kv("solver.cfl", s.cfl.to_string());
        kv("solver.dt_max", s.dt_max.to_string());
        kv("solver.t_end", s.t_end.to_string());
        kv("solver.projection", s.projection.to_string());
        kv("solver.blowup_gradu", s.blowup_gradu_threshold.to_string());
        kv("solver.band_lo", s.density_band.0.to_string());
        kv("solver.band_hi", s.density_band.1.to_string());
        kv(
            "solver.dt_override",
            s.dt_override.map_or_else(|| "none".to_string(), |v| v.to_string()),
        );
        kv("solver.checkpoint_every", self.checkpoint_every.to_string());
        kv("init.rho_amplitude", i.rho_amplitude.to_string());
        kv("init.velocity_amplitude", i.velocity_amplitude.to_string());
        kv("init.grad_d_target", i.grad_d_target.to_string());
        kv("init.mode_cutoff", i.mode_cutoff.to_string());
        kv("init.seed", i.seed.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        kv("output.cadence", self.cadence.to_string());
        out
    }
}

/// Raw `section.key -> value` pairs with their line numbers.
fn tokenize(text: &str, allowed: &[&[&str]]) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cerr(format!("line {}", n + 1), format!("expected `section.key = value`, got {line:?}")))?;
        let key = key.trim();
        if !key.contains('.') {
            return Err(cerr(format!("line {}", n + 1), format!("key {key:?} has no section")));
        }
        if !allowed.iter().any(|set| set.contains(&key)) {
            return Err(cerr(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(cerr(key, "key given more than once"));
        }
    }
    Ok(map)
}

fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}_{}", key.replace('.', "_").to_uppercase())
}

fn apply_env(map: &mut BTreeMap<String, String>, keys: &[&[&str]], env: &dyn Fn(&str) -> Option<String>) {
    for set in keys {
        for key in *set {
            if let Some(v) = env(&env_name(key)) {
                map.insert(key.to_string(), v.trim().to_string());
            }
        }
    }
}

struct Reader {
    map: BTreeMap<String, String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| cerr(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key).ok_or_else(|| cerr(key, "required key missing"))?;
        v.parse().map_err(|e| cerr(key, format!("cannot parse {v:?}: {e}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<T>().map_err(|e| cerr(key, format!("cannot parse {s:?}: {e}"))))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }
}

fn finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(cerr(key, format!("must be finite, got {v}")))
    }
}


fn build_run(r: &Reader, sweep: bool) -> Result<RunConfig, ConfigError> {
    let d = PhysParams::default();
    let head = |key: &str, fallback: f64| -> Result<f64, ConfigError> {
        if sweep {
            r.parse(key, fallback)
        } else {
            r.required(key)
        }
    };
    let e = match r.list::<f64>("physics.e")? {
        None => d.e,
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        Some(v) => return Err(cerr("physics.e", format!("expected 3 components, got {}", v.len()))),
    };
    let physics = PhysParams {
        rho_bar: finite("physics.rho_bar", head("physics.rho_bar", d.rho_bar)?)?,
        alpha: finite("physics.alpha", head("physics.alpha", d.alpha)?)?,
        gamma: finite("physics.gamma", head("physics.gamma", d.gamma)?)?,
        a: r.parse("physics.a", d.a)?,
        mu1: r.parse("physics.mu1", d.mu1)?,
        mu2: r.parse("physics.mu2", d.mu2)?,
        nu: r.parse("physics.nu", d.nu)?,
        lambda: r.parse("physics.lambda", d.lambda)?,
        e,
        q: r.parse("physics.q", d.q)?,
    };
    physics.validate().map_err(|err| {
        let hint = match err.key {
            "mu2" => " (requires 2 mu1 + 3 mu2 >= 0)",
            _ => "",
        };
        cerr(format!("physics.{}", err.key), format!("{}{hint}", err.message))
    })?;
    if !(physics.q > 3.0 && physics.q < 6.0) {
        return Err(cerr("physics.q", format!("q must lie in (3, 6), got {}", physics.q)));
    }
    let readings = Readings {
        energy_weight: r.parse("physics.mu_reading", EnergyWeight::default())?,
        h_reading: r.parse("physics.h_reading", HReading::default())?,
    };

    let dims = match r.list::<usize>("grid.dims")? {
        None => return Err(cerr("grid.dims", "required key missing")),
        Some(v) if v.len() == 1 => [v[0]; 3],
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        Some(v) => return Err(cerr("grid.dims", format!("expected 1 or 3 values, got {}", v.len()))),
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    let lengths = match r.list::<f64>("grid.lengths")? {
        None => [two_pi; 3],
        Some(v) if v.len() == 1 => [v[0]; 3],
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        Some(v) => return Err(cerr("grid.lengths", format!("expected 1 or 3 values, got {}", v.len()))),
    };
    let grid = Grid::new(dims, lengths).map_err(|e| cerr("grid.dims", e.to_string()))?;
    let mode: CalculusMode = r.parse("grid.mode", CalculusMode::default())?;

    let sd = SolverConfig::default();
    let dt_override = match r.raw("solver.dt_override") {
        None | Some("none") => None,
        Some(v) => Some(
            v.parse::<f64>()
                .map_err(|e| cerr("solver.dt_override", format!("cannot parse {v:?}: {e}")))?,
        ),
    };
    let solver = SolverConfig {
        cfl: r.parse("solver.cfl", sd.cfl)?,
        dt_max: r.parse("solver.dt_max", sd.dt_max)?,
        t_end: r.parse("solver.t_end", sd.t_end)?,
        projection: r.parse::<Projection>("solver.projection", sd.projection)?,
        blowup_gradu_threshold: r.parse("solver.blowup_gradu", sd.blowup_gradu_threshold)?,
        density_band: (
            r.parse("solver.band_lo", sd.density_band.0)?,
            r.parse("solver.band_hi", sd.density_band.1)?,
        ),
        dt_override,
    };
    solver.validate().map_err(|e| cerr(format!("solver.{}", e.key), e.message))?;
    let checkpoint_every = r.parse("solver.checkpoint_every", 0u64)?;

    let id = InitSpec::default();
    let init = InitSpec {
        rho_amplitude: r.parse("init.rho_amplitude", id.rho_amplitude)?,
        velocity_amplitude: r.parse("init.velocity_amplitude", id.velocity_amplitude)?,
        grad_d_target: r.parse("init.grad_d_target", id.grad_d_target)?,
        mode_cutoff: r.parse("init.mode_cutoff", id.mode_cutoff)?,
        seed: r.parse("init.seed", id.seed)?,
    };
    init.validate(&grid).map_err(|e| match e {
        crate::integrator::InitError::Spec { key, message } => cerr(format!("init.{key}"), message),
        other => cerr("init", other.to_string()),
    })?;

    let output_dir = PathBuf::from(r.raw("output.dir").unwrap_or("out"));
    let cadence: u64 = r.parse("output.cadence", 1)?;
    if cadence == 0 {
        return Err(cerr("output.cadence", "must be at least 1"));
    }
    Ok(RunConfig {
        physics,
        readings,
        grid,
        mode,
        solver,
        checkpoint_every,
        init,
        output_dir,
        cadence,
    })
}

/// Parses a run configuration without environment overrides.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with_env(text, &|_| None)
}

/// Parses a run configuration, letting `env(name)` override individual keys.
pub fn parse_config_with_env(text: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<RunConfig, ConfigError> {
    let mut map = tokenize(text, &[RUN_KEYS])?;
    apply_env(&mut map, &[RUN_KEYS], env);
    build_run(&Reader { map }, false)
}

/// Reads overrides from the process environment.
pub fn process_env(name: &str) -> Option<String> {
    std::env::var(name).ok()
}

/// A parameter sweep: the run template plus the swept axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: RunConfig,
    pub rho_bar_values: Vec<f64>,
    pub grad_d_targets: Vec<f64>,
    pub alpha_gamma: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, g) = s.split_once(':').ok_or_else(|| format!("expected alpha:gamma, got {s:?}"))?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let g = g.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, g))
}

pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, ConfigError> {
    parse_sweep_spec_with_env(text, &|_| None)
}

pub fn parse_sweep_spec_with_env(text: &str, env: &dyn Fn(&str) -> Option<String>) -> Result<SweepSpec, ConfigError> {
    let mut map = tokenize(text, &[RUN_KEYS, SWEEP_KEYS])?;
    apply_env(&mut map, &[RUN_KEYS, SWEEP_KEYS], env);
    let r = Reader { map };
    let nonempty = |key: &str, n: usize| {
        if n == 0 {
            Err(cerr(key, "list must not be empty"))
        } else {
            Ok(())
        }
    };
    let rho_bar_values: Vec<f64> = r
        .list("sweep.rho_bar_values")?
        .ok_or_else(|| cerr("sweep.rho_bar_values", "required key missing"))?;
    nonempty("sweep.rho_bar_values", rho_bar_values.len())?;
    if let Some(bad) = rho_bar_values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(cerr("sweep.rho_bar_values", format!("values must be positive, got {bad}")));
    }
    let grad_d_targets: Vec<f64> = r
        .list("sweep.grad_d_targets")?
        .ok_or_else(|| cerr("sweep.grad_d_targets", "required key missing"))?;
    nonempty("sweep.grad_d_targets", grad_d_targets.len())?;
    if let Some(bad) = grad_d_targets.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(cerr("sweep.grad_d_targets", format!("values must be nonnegative, got {bad}")));
    }
    let pairs_raw = r
        .raw("sweep.alpha_gamma")
        .ok_or_else(|| cerr("sweep.alpha_gamma", "required key missing"))?;
    let alpha_gamma = pairs_raw
        .split(',')
        .map(|s| parse_pair(s.trim()).map_err(|m| cerr("sweep.alpha_gamma", m)))
        .collect::<Result<Vec<_>, _>>()?;
    nonempty("sweep.alpha_gamma", alpha_gamma.len())?;
    let seeds: Vec<u64> = r.list("sweep.seeds")?.ok_or_else(|| cerr("sweep.seeds", "required key missing"))?;
    nonempty("sweep.seeds", seeds.len())?;
    let workers = r.parse("sweep.workers", 0usize)?;

    let mut base_map = r.map.clone();
    for key in SWEEP_KEYS {
        base_map.remove(*key);
    }
    // the template is validated with the first cell's values so that the physics checks run
    base_map.insert("physics.rho_bar".into(), rho_bar_values[0].to_string());
    base_map.insert("physics.alpha".into(), alpha_gamma[0].0.to_string());
    base_map.insert("physics.gamma".into(), alpha_gamma[0].1.to_string());
    let base = build_run(&Reader { map: base_map }, true)?;
    for &(alpha, gamma) in &alpha_gamma {
        for &rho_bar in &rho_bar_values {
            let p = PhysParams {
                alpha,
                gamma,
                rho_bar,
                ..base.physics
            };
            p.validate()
                .map_err(|e| cerr("sweep.alpha_gamma", format!("cell ({alpha}, {gamma}, {rho_bar}): {e}")))?;
        }
    }
    Ok(SweepSpec {
        base,
        rho_bar_values,
        grad_d_targets,
        alpha_gamma,
        seeds,
        workers,
    })
}

impl SweepSpec {
    pub fn emit(&self) -> String {
        let mut out = self.base.emit();
        let join = |v: Vec<String>| v.join(",");
        out.push_str(&format!(
            "sweep.rho_bar_values = {}\n",
            join(self.rho_bar_values.iter().map(|v| v.to_string()).collect())
        ));
        out.push_str(&format!(
            "sweep.grad_d_targets = {}\n",
            join(self.grad_d_targets.iter().map(|v| v.to_string()).collect())
        ));
        out.push_str(&format!(
            "sweep.alpha_gamma = {}\n",
            join(self.alpha_gamma.iter().map(|(a, g)| format!("{a}:{g}")).collect())
        ));
        out.push_str(&format!(
            "sweep.seeds = {}\n",
            join(self.seeds.iter().map(|v| v.to_string()).collect())
        ));
        out.push_str(&format!("sweep.workers = {}\n", self.workers));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "physics.rho_bar = 4\nphysics.alpha = 2\nphysics.gamma = 1.5\ngrid.dims = 16\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.physics.a, 1.0);
        assert_eq!(c.physics.e, [0.0, 0.0, 1.0]);
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.init, InitSpec::default());
        assert_eq!(c.cadence, 1);
        assert_eq!(c.grid, Grid::cube(16).unwrap());
        assert_eq!(parse_config(&c.emit()).unwrap(), c);
    }

    #[test]
    fn errors_carry_key_paths() {
        let e = parse_config(&format!("{MINIMAL}physics.mu2 = -1\n")).unwrap_err();
        assert_eq!(e.path, "physics.mu2");
        assert!(e.message.contains("2 mu1 + 3 mu2"));
        let e = parse_config(&format!("{MINIMAL}physics.q = 7\n")).unwrap_err();
        assert_eq!(e.path, "physics.q");
        assert!(e.message.contains("(3, 6)"));
        let e = parse_config(&format!("{MINIMAL}physics.alhpa = 2\n")).unwrap_err();
        assert_eq!(e.path, "physics.alhpa");
        let e = parse_config("physics.alpha = 2\nphysics.gamma = 1.5\ngrid.dims = 16\n").unwrap_err();
        assert_eq!(e.path, "physics.rho_bar");
        let e = parse_config(&format!("{MINIMAL}solver.cfl = fast\n")).unwrap_err();
        assert_eq!(e.path, "solver.cfl");
        let e = parse_config(&format!("{MINIMAL}garbage\n")).unwrap_err();
        assert_eq!(e.path, "line 5");
    }

    #[test]
    fn environment_overrides_keys() {
        let env = |name: &str| (name == "LCFLOW_PHYSICS_GAMMA").then(|| "1.25".to_string());
        let c = parse_config_with_env(MINIMAL, &env).unwrap();
        assert_eq!(c.physics.gamma, 1.25);
    }

    #[test]
    fn sweep_round_trip() {
        let text = "grid.dims = 16\nsweep.rho_bar_values = 1,4\nsweep.grad_d_targets = 0.1\nsweep.alpha_gamma = 2:1.5, 2.5:2\nsweep.seeds = 3,4\n";
        let s = parse_sweep_spec(text).unwrap();
        assert_eq!(s.alpha_gamma, vec![(2.0, 1.5), (2.5, 2.0)]);
        assert_eq!(parse_sweep_spec(&s.emit()).unwrap(), s);
        assert!(parse_sweep_spec("grid.dims = 16\nsweep.rho_bar_values = \n").is_err());
    }
}
