//! `lcflow`: single runs, parameter sweeps, the check suites and reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 blow-up, 4 check failure or
//! manifest checksum mismatch, 5 I/O error.

mod report;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use lcflow_core::calculus::Calculus;
use lcflow_core::checks::{run_checks, CheckOptions, Suite};
use lcflow_core::config::{parse_config_with_env, parse_sweep_spec_with_env, process_env, RunConfig};
use lcflow_core::diagnostics::RecordWriter;
use lcflow_core::experiments::sweep;
use lcflow_core::integrator::{
    build_initial_data, resume_checkpoint, run, CheckpointError, CheckpointWriter, RunControl, RunError, RunObserver, RunOutcome,
};
use lcflow_core::manifest::{manifest_path, write_atomic, Manifest};

const EXIT_CONFIG: u8 = 2;
const EXIT_BLOWUP: u8 = 3;
const EXIT_CHECK: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "lcflow", version, about = "Compressible nematic liquid-crystal flow lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration, writing records, checkpoints and a manifest.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run of the same configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run every cell of a sweep file and write the regime map.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an identity / inequality suite: identities, gn, flux, gpotential or all.
    Check {
        suite: Suite,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarise a run or sweep directory and verify its manifest checksums.
    Report { dir: PathBuf },
}

/// An error mapped to its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8, error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code,
        error: error.into(),
    }
}

fn io_fail(error: impl Into<anyhow::Error>) -> Failure {
    fail(EXIT_IO, error)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(io_fail)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, resume } => cmd_run(&config, out, resume),
        Command::Sweep { spec, out } => cmd_sweep(&spec, out),
        Command::Check {
            suite,
            grid,
            steps,
            samples,
            seed,
        } => cmd_check(
            suite,
            CheckOptions {
                grid_n: grid,
                steps,
                samples,
                seed,
            },
        ),
        Command::Report { dir } => report::cmd_report(&dir).map_err(|(code, error)| Failure { code, error }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>, resume: Option<PathBuf>) -> Result<u8, Failure> {
    let text = read_text(config_path)?;
    let mut config: RunConfig = parse_config_with_env(&text, &process_env).map_err(|e| fail(EXIT_CONFIG, e))?;
    if let Some(o) = out {
        config.output_dir = o;
    }
    for w in config.warnings() {
        eprintln!("warning: {w}");
    }
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(io_fail)?;
    let started = chrono::Utc::now().to_rfc3339();
    let p = config.physics;
    let calc = Calculus::new(config.grid, config.mode);
    let (init, start_step) = match &resume {
        Some(path) => {
            let ck = resume_checkpoint(path, &p).map_err(|e| match e {
                CheckpointError::Io(_) => io_fail(anyhow::Error::new(e).context(format!("reading {}", path.display()))),
                e => fail(EXIT_CONFIG, e),
            })?;
            (ck.state, ck.step)
        }
        None => (
            build_initial_data(&calc, &p, &config.init).map_err(|e| fail(EXIT_CONFIG, e))?,
            0,
        ),
    };
    write_atomic(&dir.join("config.txt"), config.emit().as_bytes()).map_err(io_fail)?;

    let records_path = dir.join("records.csv");
    let file = fs::File::create(&records_path)
        .with_context(|| format!("creating {}", records_path.display()))
        .map_err(io_fail)?;
    let mut writer = RecordWriter::new(BufWriter::new(file));
    let mut checkpoints = (config.checkpoint_every > 0)
        .then(|| CheckpointWriter::new(dir.join("checkpoints"), config.checkpoint_every, &p));
    let control = RunControl {
        cadence: config.cadence,
        readings: config.readings,
        start_step,
    };
    let result = {
        let mut observers: Vec<&mut dyn RunObserver> = vec![&mut writer];
        if let Some(c) = checkpoints.as_mut() {
            observers.push(c);
        }
        run(&calc, init, &p, &config.solver, control, &mut observers)
    };
    let summary = match result {
        Ok(s) => s,
        Err(RunError::Invalid(m)) => return Err(fail(EXIT_CONFIG, anyhow::anyhow!(m))),
        Err(e @ RunError::Io { .. }) => return Err(io_fail(e)),
    };
    writer.finish().context("flushing records").map_err(io_fail)?;

    let mut m = Manifest::new();
    m.set("code_version", env!("CARGO_PKG_VERSION"))
        .set("seed", config.init.seed)
        .set("started", started)
        .set("finished", chrono::Utc::now().to_rfc3339())
        .set("resumed_from", resume.as_ref().map_or(String::new(), |p| p.display().to_string()))
        .set("start_step", start_step)
        .set("steps", summary.steps)
        .set("final_time", format!("{:.16e}", summary.final_state.t))
        .set("band_respected", summary.band_respected)
        .set("admissible_exponents", config.regime().admissible);
    match summary.outcome {
        RunOutcome::Completed => m.set("outcome", "completed"),
        RunOutcome::BlewUp { t, reason } => m
            .set("outcome", "blew_up")
            .set("blowup_time", format!("{t:.16e}"))
            .set("blowup_reason", reason),
    };
    m.add_file(&dir, "config.txt").map_err(io_fail)?;
    m.add_file(&dir, "records.csv").map_err(io_fail)?;
    if let Some(c) = &checkpoints {
        for path in &c.written {
            let rel = path.strip_prefix(&dir).unwrap_or(path).to_string_lossy().into_owned();
            m.add_file(&dir, &rel).map_err(io_fail)?;
        }
    }
    m.push_block(summary.bootstrap.to_key_values());
    m.write(&manifest_path(&dir)).map_err(io_fail)?;

    match summary.outcome {
        RunOutcome::Completed => {
            println!(
                "completed: t = {:.6e} after {} steps; output in {}",
                summary.final_state.t,
                summary.steps,
                dir.display()
            );
            Ok(0)
        }
        RunOutcome::BlewUp { t, reason } => {
            println!("blow-up at t = {t:.6e}: {reason}; output in {}", dir.display());
            Ok(EXIT_BLOWUP)
        }
    }
}

fn cmd_sweep(spec_path: &Path, out: Option<PathBuf>) -> Result<u8, Failure> {
    let text = read_text(spec_path)?;
    let mut spec = parse_sweep_spec_with_env(&text, &process_env).map_err(|e| fail(EXIT_CONFIG, e))?;
    if let Some(o) = out {
        spec.base.output_dir = o;
    }
    let dir = spec.base.output_dir.clone();
    let map = sweep(&spec, Some(&dir)).map_err(io_fail)?;
    for c in &map.cells {
        println!(
            "rho_bar = {:<6} target = {:<6} alpha = {:<4} gamma = {:<4} seed = {:<4} {}",
            c.params.rho_bar, c.params.grad_d_target, c.params.alpha, c.params.gamma, c.params.seed, c.outcome
        );
    }
    println!("{}", map.trend());
    println!("regime map: {}", dir.join("regime_map.csv").display());
    Ok(0)
}

fn cmd_check(suite: Suite, opts: CheckOptions) -> Result<u8, Failure> {
    let report = run_checks(suite, &opts).map_err(|e| fail(EXIT_CHECK, e))?;
    print!("{report}");
    Ok(if report.passed() { 0 } else { EXIT_CHECK })
}
