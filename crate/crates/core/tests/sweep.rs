use lcflow_core::config::parse_sweep_spec;
use lcflow_core::experiments::{run_cell, sweep, CellOutcome};

const SMALL: &str = "grid.dims = 8
solver.t_end = 0.004
init.velocity_amplitude = 2
sweep.rho_bar_values = 2, 8
sweep.grad_d_targets = 0.05
sweep.alpha_gamma = 2:1.5, 1:2
sweep.seeds = 3
sweep.workers = 2
";

#[test]
fn equilibrium_cell_persists_unchanged() {
    let spec = parse_sweep_spec(
        "grid.dims = 8\nsolver.t_end = 0.01\ninit.rho_amplitude = 0\n\
         sweep.rho_bar_values = 4\nsweep.grad_d_targets = 0\nsweep.alpha_gamma = 2:1.5\nsweep.seeds = 0\n",
    )
    .unwrap();
    let map = sweep(&spec, None).unwrap();
    let cell = &map.cells[0];
    assert!(cell.persisted(), "{}", cell.outcome);
    assert_eq!(cell.initial_e_d, 0.0);
    assert_eq!(cell.max_e_d, 0.0);
    let first = cell.records.first().unwrap();
    for r in &cell.records {
        assert_eq!(r.total_energy, first.total_energy);
        assert_eq!(r.rho_dev_linf, 0.0);
    }
    assert!(map.persistence_violations().is_empty());
}

#[test]
fn unreachable_target_is_a_config_error_and_others_still_run() {
    let spec = parse_sweep_spec(
        "grid.dims = 8\nsolver.t_end = 0.002\n\
         sweep.rho_bar_values = 4\nsweep.grad_d_targets = 0.05, 1e6\nsweep.alpha_gamma = 2:1.5\nsweep.seeds = 0\n",
    )
    .unwrap();
    let map = sweep(&spec, None).unwrap();
    assert_eq!(map.cells.len(), 2);
    assert!(map.cells[0].persisted());
    assert!(matches!(map.cells[1].outcome, CellOutcome::ConfigError(_)));
    let csv = map.to_csv();
    assert!(csv.lines().nth(2).unwrap().contains("config_error"));
}

#[test]
fn sweep_is_deterministic_and_cells_are_independent() {
    let spec = parse_sweep_spec(SMALL).unwrap();
    let a = sweep(&spec, None).unwrap();
    let b = sweep(&spec, None).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.cells.len(), 4);
    let last = a.cells.last().unwrap();
    assert_eq!(&run_cell(&spec, last.params, None), last);
}

#[test]
fn sweep_writes_its_artifacts() {
    let spec = parse_sweep_spec(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let map = sweep(&spec, Some(dir.path())).unwrap();
    for name in ["regime_map.csv", "sweep.txt", "trend.txt", "manifest.txt"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let on_disk = std::fs::read_to_string(dir.path().join("regime_map.csv")).unwrap();
    assert_eq!(on_disk, map.to_csv());
    let again = parse_sweep_spec(&std::fs::read_to_string(dir.path().join("sweep.txt")).unwrap()).unwrap();
    assert_eq!(again, spec);
}
