//! Parameter sweeps over the regime axes, closure checks of the bootstrap
//! functionals, and the convergence and scaling studies.
//!
//! Persistence means reaching `t_end` with the density band intact and no
//! blow-up trigger. It is a finite-horizon observation, not global existence.

mod closure;
mod studies;
mod sweep;

pub use crate::config::SweepSpec;
pub use closure::{bootstrap_closure_check, evaluate_closure, ClosureReport, ClosureVerdict, Normalizations};
pub use studies::{
    acoustic_convergence, acoustic_frequency, acoustic_linear_solution, acoustic_params, acoustic_state,
    acoustic_temporal_order, advection_convergence, flux_refinement, geodesic_twist, manufactured_state,
    rescale_params, rescale_state, rhs_scaling_defect, scaling_invariance_study, temporal_self_convergence,
    twist_stationarity, ConvergenceRow, ConvergenceTable, FrequencyCheck, ScalingDefect, StudyError,
};
pub use sweep::{
    cell_config, run_cell, sweep, CellOutcome, CellParams, RegimeCell, RegimeMap, SweepError, TrendReport,
    REGIME_COLUMNS,
};
