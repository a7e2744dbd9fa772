use std::fmt;

use crate::diagnostics::BootstrapReport;
use crate::model::{beta_exponent, PhysParams};

use super::RegimeCell;

/// Constants scaling the closure bounds.
///
/// `n3` is the exact initial-data value; `n1`, `n2`, `n4` are not computable
/// and are normalised so that the corresponding functional's first-tick value
/// equals `N rho_bar^power` (marked `empirical` in every report).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizations {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
}

impl Normalizations {
    /// Reads the normalisations off the first record of a run.
    pub fn from_first_tick(p: &PhysParams, grad_rho_lq: f64, grad_rho_l2: f64, sqrt_rho_ut_l2: f64, n3: f64) -> Self {
        let beta = beta_exponent(p.gamma);
        let rb_beta = p.rho_bar.powf(beta);
        Self {
            n1: grad_rho_lq * grad_rho_lq / rb_beta,
            n2: grad_rho_l2 * grad_rho_l2 / rb_beta,
            n3,
            n4: sqrt_rho_ut_l2 * sqrt_rho_ut_l2 / p.rho_bar.powf(2.0 * p.alpha - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureVerdict {
    pub name: &'static str,
    pub value: f64,
    /// Bound assumed by the continuation argument (factor 2, `2^(alpha+2)` or 3).
    pub assumption_bound: f64,
    /// Strengthened bound it concludes (factor 1, `2^(alpha+1)` or 2).
    pub conclusion_bound: f64,
    pub assumption_ok: bool,
    pub conclusion_ok: bool,
    /// The bound uses an empirical normalisation.
    pub empirical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureReport {
    pub delta: f64,
    pub norms: Normalizations,
    pub verdicts: [ClosureVerdict; 6],
}

impl ClosureReport {
    /// Compact `name:AC` string, `A`/`a` for the assumption level and `C`/`c` for the conclusion level.
    pub fn verdict_string(&self) -> String {
        self.verdicts
            .iter()
            .map(|v| {
                format!(
                    "{}:{}{}",
                    v.name,
                    if v.assumption_ok { 'A' } else { 'a' },
                    if v.conclusion_ok { 'C' } else { 'c' }
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn all_assumptions_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.assumption_ok)
    }

    pub fn all_conclusions_hold(&self) -> bool {
        self.verdicts.iter().all(|v| v.conclusion_ok)
    }
}

impl fmt::Display for ClosureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "delta = {:.6e}; N1 = {:.6e}, N2 = {:.6e}, N4 = {:.6e} (empirical, first-tick normalisation); N3 = {:.6e}",
            self.delta, self.norms.n1, self.norms.n2, self.norms.n4, self.norms.n3
        )?;
        writeln!(
            f,
            "{:<8} {:>14} {:>14} {:>6} {:>14} {:>6}",
            "name", "value", "assumed", "ok", "concluded", "ok"
        )?;
        for v in &self.verdicts {
            writeln!(
                f,
                "{:<8} {:>14.6e} {:>14.6e} {:>6} {:>14.6e} {:>6}{}",
                v.name,
                v.value,
                v.assumption_bound,
                v.assumption_ok,
                v.conclusion_bound,
                v.conclusion_ok,
                if v.empirical { "  empirical" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// Compares the six functional values with both levels of bounds.
pub fn evaluate_closure(values: [f64; 6], p: &PhysParams, delta: f64, norms: Normalizations) -> ClosureReport {
    let rb = p.rho_bar;
    let beta = beta_exponent(p.gamma);
    let rb_beta = rb.powf(beta);
    let u1 = norms.n3 * rb.powf(p.alpha);
    let u2 = norms.n4 * rb.powf(2.0 * p.alpha - 1.0);
    let bounds: [(f64, f64, bool); 6] = [
        (2.0 * delta, delta, false),
        (rb / 2.0, rb / 4.0, false),
        (2.0 * norms.n1 * rb_beta, norms.n1 * rb_beta, true),
        (2.0 * norms.n2 * rb_beta, norms.n2 * rb_beta, true),
        (2f64.powf(p.alpha + 2.0) * u1, 2f64.powf(p.alpha + 1.0) * u1, false),
        (3.0 * u2, 2.0 * u2, true),
    ];
    let verdicts = std::array::from_fn(|i| {
        let (a, c, empirical) = bounds[i];
        ClosureVerdict {
            name: BootstrapReport::NAMES[i],
            value: values[i],
            assumption_bound: a,
            conclusion_bound: c,
            assumption_ok: values[i] <= a,
            conclusion_ok: values[i] <= c,
            empirical,
        }
    });
    ClosureReport { delta, norms, verdicts }
}

/// Closure verdicts for a cell that produced a bootstrap report.
pub fn bootstrap_closure_check(cell: &RegimeCell, delta: f64) -> Option<ClosureReport> {
    let b = cell.bootstrap.as_ref()?;
    let first = cell.records.first()?;
    let norms = Normalizations::from_first_tick(
        &cell.physics,
        first.grad_rho_lq,
        first.grad_rho_l2,
        first.sqrt_rho_ut_l2,
        b.n3,
    );
    Some(evaluate_closure(b.values(), &cell.physics, delta, norms))
}
