//! Hand-evaluated and independently integrated reference values.

use std::f64::consts::PI;

use lcflow_core::calculus::Calculus;
use lcflow_core::diagnostics::{bootstrap_update, gn_ratio, gn_theta, BootstrapReport, Readings, RunRecord};
use lcflow_core::experiments::{acoustic_linear_solution, evaluate_closure, Normalizations};
use lcflow_core::field::{DirectorField, ScalarField, VectorField};
use lcflow_core::grid::{CalculusMode, Grid};
use lcflow_core::integrator::{
    build_initial_data, read_checkpoint, resume_checkpoint, run, write_checkpoint, CheckpointError, InitSpec,
    RunControl, RunObserver, SolverConfig,
};
use lcflow_core::model::{PhysParams, State};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn bootstrap_first_tick_matches_hand_norms() {
    // gamma = 3/2 makes rho |u_t|^2 = (a gamma)^2 |grad rho|^2 for u = 0, d = e.
    let p = PhysParams {
        gamma: 1.5,
        ..PhysParams::default()
    };
    let amp = 0.1;
    let grid = Grid::cube(16).unwrap();
    let calc = Calculus::new(grid, CalculusMode::Spectral);
    let state = State {
        rho: ScalarField::from_fn(grid, |x| p.rho_bar + amp * x[0].sin()),
        u: VectorField::zeros(grid),
        d: DirectorField::uniform(grid, p.e).unwrap(),
        t: 0.0,
    };
    let r = bootstrap_update(&BootstrapReport::new(&p, Readings::default()), &calc, &state, &p, Readings::default())
        .unwrap();
    let vol = (2.0 * PI).powi(3);
    // int cos^2 = vol / 2, int cos^4 = 3 vol / 8 over the box
    let grad_l2_sq = amp * amp * vol / 2.0;
    let grad_l4_sq = (amp.powi(4) * 3.0 * vol / 8.0).sqrt();
    let ut_sq = (p.a * p.gamma).powi(2) * grad_l2_sq;

    assert_eq!(r.ticks, 1);
    assert_eq!(r.e_d(), 0.0);
    assert!(close(r.e_rho1(), amp, 1e-12), "{}", r.e_rho1());
    assert!(close(r.e_rho2(), grad_l4_sq, 1e-10), "{} vs {grad_l4_sq}", r.e_rho2());
    assert!(close(r.e_rho3(), grad_l2_sq, 1e-10), "{} vs {grad_l2_sq}", r.e_rho3());
    assert!(r.e_u1().abs() < 1e-20);
    assert!(close(r.e_u2(), ut_sq, 1e-10), "{} vs {ut_sq}", r.e_u2());
    assert_eq!(r.n3, 0.0);
}

#[test]
fn gn_theta_examples() {
    assert!((gn_theta(1, 2, 2.0, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
    assert!((gn_theta(1, 2, 4.0, 2.0, 2.0).unwrap() - 0.875).abs() < 1e-15);
    assert!(gn_theta(2, 1, 2.0, 2.0, 2.0).is_err());
}

#[test]
fn gn_ratio_single_sine() {
    let grid = Grid::cube(16).unwrap();
    let calc = Calculus::new(grid, CalculusMode::Spectral);
    let cos4 = ((2.0 * PI).powi(2) * 0.75 * PI).powf(0.25);
    let sin2 = ((2.0 * PI).powi(3) / 2.0).sqrt();
    for k in [1.0, 2.0, 3.0] {
        let f = ScalarField::from_fn(grid, |x| (k * x[0]).sin());
        let r = gn_ratio(&calc, &f, 1, 2, 2.0, 2.0, 2.0).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "k = {k}: {r}");
        let r = gn_ratio(&calc, &f, 1, 2, 4.0, 2.0, 2.0).unwrap();
        let want = k.powf(-0.75) * cos4 / sin2;
        assert!(close(r, want, 1e-12), "k = {k}: {r} vs {want}");
    }
}

#[test]
fn acoustic_solution_matches_ode_integration() {
    let p = PhysParams {
        rho_bar: 2.0,
        mu1: 0.05,
        mu2: 0.02,
        ..PhysParams::default()
    };
    let k = 2.0;
    let rb = p.rho_bar;
    let c2 = p.a * p.gamma * rb.powf(p.gamma - 1.0);
    let nu = (2.0 * p.mu1 + p.mu2) * rb.powf(p.alpha - 1.0);
    let f = |y: [f64; 2]| [-rb * k * y[1], c2 * k / rb * y[0] - nu * k * k * y[1]];
    let (mut y, t_end, n) = ([0.3, -0.1], 1.5, 20_000);
    let h = t_end / n as f64;
    for _ in 0..n {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let (r, u) = acoustic_linear_solution(&p, k, 0.3, -0.1, t_end);
    assert!((r - y[0]).abs() < 1e-12 && (u - y[1]).abs() < 1e-12, "({r}, {u}) vs {y:?}");
}

#[test]
fn closure_density_deviation_example() {
    // E_rho1 = 0.3 rho_bar: inside the assumed rho_bar/2, outside the concluded rho_bar/4.
    let p = PhysParams::default();
    let norms = Normalizations {
        n1: 1.0,
        n2: 1.0,
        n3: 1.0,
        n4: 1.0,
    };
    let values = [0.0, 0.3 * p.rho_bar, 0.0, 0.0, 0.0, 0.0];
    let report = evaluate_closure(values, &p, 1.0, norms);
    let v = report.verdicts[1];
    assert_eq!(v.name, "E_rho1");
    assert!(v.assumption_ok && !v.conclusion_ok);
    assert_eq!(v.assumption_bound, 2.0);
    assert_eq!(v.conclusion_bound, 1.0);
    assert!(report.verdict_string().contains("E_rho1:Ac"));
    assert!(report.all_assumptions_hold() && !report.all_conclusions_hold());
}

fn small_state(p: &PhysParams) -> (Calculus, State) {
    let grid = Grid::cube(8).unwrap();
    let calc = Calculus::new(grid, CalculusMode::Spectral);
    let spec = InitSpec {
        velocity_amplitude: 0.5,
        grad_d_target: 0.2,
        seed: 11,
        ..InitSpec::default()
    };
    let s = build_initial_data(&calc, p, &spec).unwrap();
    (calc, s)
}

#[test]
fn checkpoint_round_trip_and_digest_rejection() {
    let p = PhysParams::default();
    let (_, state) = small_state(&p);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    write_checkpoint(&path, &state, 17, &p).unwrap();
    let ck = read_checkpoint(&path).unwrap();
    assert_eq!(ck.step, 17);
    assert_eq!(ck.state, state);
    assert!(resume_checkpoint(&path, &p).is_ok());
    let other = PhysParams { mu1: 2.0, ..p };
    assert!(matches!(resume_checkpoint(&path, &other), Err(CheckpointError::ParamsMismatch { .. })));
    std::fs::write(&path, b"nonsense").unwrap();
    assert!(read_checkpoint(&path).is_err());
}

fn records_with_cadence(cadence: u64) -> (Vec<RunRecord>, State) {
    let p = PhysParams::default();
    let (calc, init) = small_state(&p);
    let cfg = SolverConfig {
        t_end: 0.02,
        ..SolverConfig::default()
    };
    let mut records: Vec<RunRecord> = Vec::new();
    let summary = {
        let mut obs: Vec<&mut dyn RunObserver> = vec![&mut records];
        let control = RunControl {
            cadence,
            ..RunControl::default()
        };
        run(&calc, init, &p, &cfg, control, &mut obs).unwrap()
    };
    (records, summary.final_state)
}

#[test]
fn cadence_only_thins_the_record_stream() {
    let (fine, end_fine) = records_with_cadence(1);
    let (coarse, end_coarse) = records_with_cadence(3);
    assert_eq!(end_fine, end_coarse);
    assert!(coarse.len() < fine.len());
    assert_eq!(coarse.first(), fine.first());
    assert_eq!(coarse.last(), fine.last());
    for r in &coarse {
        assert!(fine.contains(r), "record at t = {} missing from the fine stream", r.t);
    }
}
