use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::calculus::Calculus;
use crate::config::{RunConfig, SweepSpec};
use crate::diagnostics::{write_records_csv, BootstrapReport, RunRecord};
use crate::integrator::{build_initial_data, run, BlowUpReason, CheckpointWriter, RunControl, RunError, RunObserver, RunOutcome};
use crate::manifest::{manifest_path, write_atomic, Manifest};
use crate::model::{regime_check, PhysParams, RegimeVerdict};

/// Coordinates of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub rho_bar: f64,
    pub grad_d_target: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl CellParams {
    pub fn physics(&self, base: &PhysParams) -> PhysParams {
        PhysParams {
            rho_bar: self.rho_bar,
            alpha: self.alpha,
            gamma: self.gamma,
            ..*base
        }
    }

    /// Directory name used for the cell's artifacts.
    pub fn slug(&self, index: usize) -> String {
        format!(
            "cell_{index:03}_rb{}_gd{}_a{}_g{}_s{}",
            self.rho_bar, self.grad_d_target, self.alpha, self.gamma, self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    /// Reached `t_end` with every blow-up trigger silent.
    Persisted,
    BlewUp { t: f64, reason: BlowUpReason },
    /// Rejected before time stepping (unreachable target, invalid parameters).
    ConfigError(String),
    /// Artifact writing failed.
    IoError(String),
}

impl CellOutcome {
    pub fn tag(&self) -> &'static str {
        match self {
            CellOutcome::Persisted => "persisted",
            CellOutcome::BlewUp { .. } => "blew_up",
            CellOutcome::ConfigError(_) => "config_error",
            CellOutcome::IoError(_) => "io_error",
        }
    }

    pub fn reason(&self) -> String {
        match self {
            CellOutcome::Persisted => String::new(),
            CellOutcome::BlewUp { reason, .. } => reason.tag().to_string(),
            CellOutcome::ConfigError(m) | CellOutcome::IoError(m) => m.clone(),
        }
    }
}

impl fmt::Display for CellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellOutcome::BlewUp { t, reason } => write!(f, "blew_up at t = {t:.6e} ({reason})"),
            CellOutcome::ConfigError(m) => write!(f, "config_error: {m}"),
            CellOutcome::IoError(m) => write!(f, "io_error: {m}"),
            CellOutcome::Persisted => f.write_str("persisted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCell {
    pub params: CellParams,
    pub physics: PhysParams,
    pub verdict: RegimeVerdict,
    pub outcome: CellOutcome,
    pub termination_time: f64,
    pub steps: u64,
    pub bootstrap: Option<BootstrapReport>,
    pub band_respected: bool,
    /// `|| grad d0 ||_{L^3}`.
    pub initial_e_d: f64,
    /// Largest `|| grad d ||_{L^3}` over the recorded ticks.
    pub max_e_d: f64,
    pub records: Vec<RunRecord>,
}

impl RegimeCell {
    pub fn persisted(&self) -> bool {
        self.outcome == CellOutcome::Persisted
    }

    /// Persistence conditions that failed at some tick: density band and `E_d <= 2 E_d(0)`.
    pub fn persistence_violations(&self, band: (f64, f64)) -> Vec<String> {
        let mut out = Vec::new();
        if !self.persisted() {
            return out;
        }
        let (lo, hi) = (band.0 * self.physics.rho_bar, band.1 * self.physics.rho_bar);
        let dev_limit = (hi - self.physics.rho_bar).min(self.physics.rho_bar - lo);
        for r in &self.records {
            if r.rho_dev_linf > dev_limit {
                out.push(format!("t = {:.6e}: density deviation {:.6e} leaves the band", r.t, r.rho_dev_linf));
            }
            if r.grad_d_l3 > 2.0 * self.initial_e_d {
                out.push(format!(
                    "t = {:.6e}: E_d = {:.6e} exceeds twice its initial value {:.6e}",
                    r.t, r.grad_d_l3, self.initial_e_d
                ));
            }
        }
        if !self.band_respected {
            out.push("density band flagged by the run loop".into());
        }
        out
    }
}

fn cell_list(spec: &SweepSpec) -> Vec<CellParams> {
    let mut cells = Vec::new();
    for &(alpha, gamma) in &spec.alpha_gamma {
        for &rho_bar in &spec.rho_bar_values {
            for &grad_d_target in &spec.grad_d_targets {
                for &seed in &spec.seeds {
                    cells.push(CellParams {
                        rho_bar,
                        grad_d_target,
                        alpha,
                        gamma,
                        seed,
                    });
                }
            }
        }
    }
    cells
}

/// The run configuration a cell executes.
pub fn cell_config(spec: &SweepSpec, cell: &CellParams) -> RunConfig {
    let mut c = spec.base.clone();
    c.physics = cell.physics(&spec.base.physics);
    c.init.grad_d_target = cell.grad_d_target;
    c.init.seed = cell.seed;
    c
}

fn config_error(cell: CellParams, physics: PhysParams, message: String) -> RegimeCell {
    RegimeCell {
        params: cell,
        physics,
        verdict: regime_check(&physics),
        outcome: CellOutcome::ConfigError(message),
        termination_time: 0.0,
        steps: 0,
        bootstrap: None,
        band_respected: false,
        initial_e_d: 0.0,
        max_e_d: 0.0,
        records: Vec::new(),
    }
}

/// Runs one cell, writing its artifacts under `dir` when given.
pub fn run_cell(spec: &SweepSpec, cell: CellParams, dir: Option<&Path>) -> RegimeCell {
    let config = cell_config(spec, &cell);
    let physics = config.physics;
    let calc = Calculus::new(config.grid, config.mode);
    let init = match build_initial_data(&calc, &physics, &config.init) {
        Ok(s) => s,
        Err(e) => return config_error(cell, physics, e.to_string()),
    };
    let mut records: Vec<RunRecord> = Vec::new();
    let mut checkpoints = match (dir, config.checkpoint_every) {
        (Some(d), every) if every > 0 => Some(CheckpointWriter::new(d.join("checkpoints"), every, &physics)),
        _ => None,
    };
    let control = RunControl {
        cadence: config.cadence,
        readings: config.readings,
        start_step: 0,
    };
    let result = {
        let mut observers: Vec<&mut dyn RunObserver> = vec![&mut records];
        if let Some(c) = checkpoints.as_mut() {
            observers.push(c);
        }
        run(&calc, init, &physics, &config.solver, control, &mut observers)
    };
    let summary = match result {
        Ok(s) => s,
        Err(RunError::Invalid(m)) => return config_error(cell, physics, m),
        Err(RunError::Io { source, partial }) => {
            let mut c = config_error(cell, physics, String::new());
            c.outcome = CellOutcome::IoError(source.to_string());
            c.termination_time = partial.final_state.t;
            return c;
        }
    };
    let outcome = match summary.outcome {
        RunOutcome::Completed => CellOutcome::Persisted,
        RunOutcome::BlewUp { t, reason } => CellOutcome::BlewUp { t, reason },
    };
    let mut out = RegimeCell {
        params: cell,
        physics,
        verdict: regime_check(&physics),
        outcome,
        termination_time: summary.final_state.t,
        steps: summary.steps,
        max_e_d: summary.bootstrap.e_d(),
        bootstrap: Some(summary.bootstrap),
        band_respected: summary.band_respected,
        initial_e_d: summary.initial_grad_d_l3,
        records,
    };
    if let Some(d) = dir {
        if let Err(e) = write_cell_dir(d, &config, &out) {
            out.outcome = CellOutcome::IoError(e.to_string());
        }
    }
    out
}

fn write_cell_dir(dir: &Path, config: &RunConfig, cell: &RegimeCell) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("config.txt"), config.emit().as_bytes())?;
    let csv = write_records_csv(Vec::new(), &cell.records)?;
    write_atomic(&dir.join("records.csv"), &csv)?;
    let mut m = Manifest::new();
    m.set("code_version", env!("CARGO_PKG_VERSION"))
        .set("seed", cell.params.seed)
        .set("outcome", cell.outcome.tag())
        .set("reason", cell.outcome.reason())
        .set("termination_time", format!("{:.16e}", cell.termination_time))
        .set("steps", cell.steps)
        .set("finished", chrono::Utc::now().to_rfc3339());
    m.add_file(dir, "config.txt")?.add_file(dir, "records.csv")?;
    let ck = dir.join("checkpoints");
    if ck.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&ck)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".bin"))
            .collect();
        names.sort();
        for n in names {
            m.add_file(dir, &format!("checkpoints/{n}"))?;
        }
    }
    if let Some(b) = &cell.bootstrap {
        m.push_block(b.to_key_values());
    }
    m.write(&manifest_path(dir))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMap {
    pub cells: Vec<RegimeCell>,
    pub rho_bar_values: Vec<f64>,
    pub grad_d_targets: Vec<f64>,
    pub alpha_gamma: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    pub density_band: (f64, f64),
}

pub const REGIME_COLUMNS: [&str; 18] = [
    "rho_bar",
    "grad_d_target",
    "alpha",
    "gamma",
    "seed",
    "outcome",
    "termination_time",
    "reason",
    "steps",
    "E_d",
    "E_rho1",
    "E_rho2",
    "E_rho3",
    "E_u1",
    "E_u2",
    "N3",
    "initial_E_d",
    "band_respected",
];

impl RegimeMap {
    pub fn to_csv(&self) -> String {
        let mut out = REGIME_COLUMNS.join(",");
        out.push('\n');
        for c in &self.cells {
            let p = &c.params;
            let mut row = vec![
                p.rho_bar.to_string(),
                p.grad_d_target.to_string(),
                p.alpha.to_string(),
                p.gamma.to_string(),
                p.seed.to_string(),
                c.outcome.tag().to_string(),
                format!("{:.16e}", c.termination_time),
                c.outcome.reason().replace(',', ";"),
                c.steps.to_string(),
            ];
            match &c.bootstrap {
                Some(b) => {
                    row.extend(b.values().iter().map(|v| format!("{v:.16e}")));
                    row.push(format!("{:.16e}", b.n3));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 7)),
            }
            row.push(format!("{:.16e}", c.initial_e_d));
            row.push(c.band_respected.to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn fraction(&self, alpha_gamma: (f64, f64), rho_bar: f64, target: f64) -> f64 {
        let matching: Vec<&RegimeCell> = self
            .cells
            .iter()
            .filter(|c| {
                (c.params.alpha, c.params.gamma) == alpha_gamma
                    && c.params.rho_bar == rho_bar
                    && c.params.grad_d_target == target
            })
            .collect();
        if matching.is_empty() {
            return 0.0;
        }
        matching.iter().filter(|c| c.persisted()).count() as f64 / matching.len() as f64
    }

    /// Persistence fractions and whether they are monotone along both axes.
    pub fn trend(&self) -> TrendReport {
        let mut tables = Vec::new();
        let mut rho_monotone = true;
        let mut target_monotone = true;
        for &ag in &self.alpha_gamma {
            let table: Vec<Vec<f64>> = self
                .rho_bar_values
                .iter()
                .map(|&rb| self.grad_d_targets.iter().map(|&t| self.fraction(ag, rb, t)).collect())
                .collect();
            let rho_order = sorted_order(&self.rho_bar_values);
            let target_order = sorted_order(&self.grad_d_targets);
            for j in 0..self.grad_d_targets.len() {
                for w in rho_order.windows(2) {
                    if table[w[1]][j] < table[w[0]][j] {
                        rho_monotone = false;
                    }
                }
            }
            for row in &table {
                for w in target_order.windows(2) {
                    if row[w[1]] > row[w[0]] {
                        target_monotone = false;
                    }
                }
            }
            tables.push((ag, table));
        }
        TrendReport {
            rho_bar_values: self.rho_bar_values.clone(),
            grad_d_targets: self.grad_d_targets.clone(),
            tables,
            rho_monotone,
            target_monotone,
        }
    }

    /// Cells violating the persistence definition, as `(index, message)`.
    pub fn persistence_violations(&self) -> Vec<(usize, String)> {
        self.cells
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.persistence_violations(self.density_band).into_iter().map(move |m| (i, m)))
            .collect()
    }
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Persistence fractions per `(alpha, gamma)`, indexed `[rho_bar][target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub rho_bar_values: Vec<f64>,
    pub grad_d_targets: Vec<f64>,
    pub tables: Vec<((f64, f64), Vec<Vec<f64>>)>,
    /// Nondecreasing in `rho_bar` for every target.
    pub rho_monotone: bool,
    /// Nonincreasing in the director-gradient target for every `rho_bar`.
    pub target_monotone: bool,
}

impl fmt::Display for TrendReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "persistence = reached t_end with density in band and no blow-up trigger (finite horizon, not global existence)"
        )?;
        for ((alpha, gamma), table) in &self.tables {
            writeln!(f, "alpha = {alpha}, gamma = {gamma}: persisted fraction")?;
            write!(f, "{:>10}", "rho_bar")?;
            for t in &self.grad_d_targets {
                write!(f, " {:>10}", format!("gd={t}"))?;
            }
            writeln!(f)?;
            for (rb, row) in self.rho_bar_values.iter().zip(table) {
                write!(f, "{rb:>10}")?;
                for v in row {
                    write!(f, " {v:>10.3}")?;
                }
                writeln!(f)?;
            }
        }
        writeln!(f, "nondecreasing in rho_bar: {}", self.rho_monotone)?;
        write!(f, "nonincreasing in grad d0 target: {}", self.target_monotone)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("writing sweep artifacts: {0}")]
    Io(#[from] io::Error),
}

/// Runs every `(alpha, gamma, rho_bar, target, seed)` cell.
///
/// Cells run in parallel on `spec.workers` threads (0 = all cores) and are
/// returned in the nested order of the lists. With `out_dir`, each cell gets
/// its own directory and the regime map is written as `regime_map.csv`.
pub fn sweep(spec: &SweepSpec, out_dir: Option<&Path>) -> Result<RegimeMap, SweepError> {
    let cells = cell_list(spec);
    let dirs: Vec<Option<PathBuf>> = cells
        .iter()
        .enumerate()
        .map(|(i, c)| out_dir.map(|d| d.join(c.slug(i))))
        .collect();
    let work = || -> Vec<RegimeCell> {
        cells
            .par_iter()
            .zip(dirs.par_iter())
            .map(|(c, d)| run_cell(spec, *c, d.as_deref()))
            .collect()
    };
    let results = if spec.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let map = RegimeMap {
        cells: results,
        rho_bar_values: spec.rho_bar_values.clone(),
        grad_d_targets: spec.grad_d_targets.clone(),
        alpha_gamma: spec.alpha_gamma.clone(),
        seeds: spec.seeds.clone(),
        density_band: spec.base.solver.density_band,
    };
    if let Some(d) = out_dir {
        fs::create_dir_all(d)?;
        write_atomic(&d.join("regime_map.csv"), map.to_csv().as_bytes())?;
        write_atomic(&d.join("sweep.txt"), spec.emit().as_bytes())?;
        write_atomic(&d.join("trend.txt"), format!("{}\n", map.trend()).as_bytes())?;
        let mut m = Manifest::new();
        m.set("code_version", env!("CARGO_PKG_VERSION"))
            .set("cells", map.cells.len())
            .set("finished", chrono::Utc::now().to_rfc3339());
        m.add_file(d, "sweep.txt")?.add_file(d, "regime_map.csv")?.add_file(d, "trend.txt")?;
        m.write(&manifest_path(d))?;
    }
    Ok(map)
}
