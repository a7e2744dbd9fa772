use crate::calculus::Calculus;
use crate::error::FieldError;
use crate::model::{PhysParams, State};

use super::{observe, Readings};

/// Norms entering the bootstrap functionals at one diagnostic tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickSample {
    pub t: f64,
    pub grad_d_l3: f64,
    pub rho_dev_linf: f64,
    pub grad_rho_lq: f64,
    pub grad_rho_l2: f64,
    pub grad_u_l2: f64,
    pub sqrt_rho_ut_l2: f64,
    pub grad_ut_l2: f64,
    /// `2 mu1 || D u ||^2 + mu2 || div u ||^2` at this tick.
    pub n3: f64,
}

/// Running sup and trapezoid accumulators for the six bootstrap functionals.
///
/// The parts are kept separately so that each functional can be recombined
/// or checked against hand-evaluated norms.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub sup_grad_d_l3: f64,
    pub sup_rho_dev: f64,
    pub sup_grad_rho_lq_sq: f64,
    pub int_grad_rho_lq_sq: f64,
    pub sup_grad_rho_l2_sq: f64,
    pub int_grad_rho_l2_sq: f64,
    pub sup_grad_u_sq: f64,
    pub int_rho_ut_sq: f64,
    pub sup_rho_ut_sq: f64,
    pub int_grad_ut_sq: f64,
    /// Value at the first tick.
    pub n3: f64,
    /// `mu rho_bar^alpha / 2^(alpha+1)`.
    pub weight: f64,
    /// `rho_bar^(gamma - alpha)`.
    pub rho_factor: f64,
    pub ticks: usize,
    last: Option<(f64, [f64; 4])>,
}

impl BootstrapReport {
    pub fn new(p: &PhysParams, readings: Readings) -> Self {
        Self {
            sup_grad_d_l3: 0.0,
            sup_rho_dev: 0.0,
            sup_grad_rho_lq_sq: 0.0,
            int_grad_rho_lq_sq: 0.0,
            sup_grad_rho_l2_sq: 0.0,
            int_grad_rho_l2_sq: 0.0,
            sup_grad_u_sq: 0.0,
            int_rho_ut_sq: 0.0,
            sup_rho_ut_sq: 0.0,
            int_grad_ut_sq: 0.0,
            n3: 0.0,
            weight: readings.energy_weight.weight(p),
            rho_factor: p.rho_bar.powf(p.gamma - p.alpha),
            ticks: 0,
            last: None,
        }
    }

    /// Folds one tick in. Ticks must arrive in nondecreasing time.
    pub fn absorb(&mut self, s: &TickSample) {
        let integrands = [
            s.grad_rho_lq * s.grad_rho_lq,
            s.grad_rho_l2 * s.grad_rho_l2,
            s.sqrt_rho_ut_l2 * s.sqrt_rho_ut_l2,
            s.grad_ut_l2 * s.grad_ut_l2,
        ];
        match self.last {
            None => self.n3 = s.n3,
            Some((t0, prev)) => {
                let h = 0.5 * (s.t - t0).max(0.0);
                self.int_grad_rho_lq_sq += h * (prev[0] + integrands[0]);
                self.int_grad_rho_l2_sq += h * (prev[1] + integrands[1]);
                self.int_rho_ut_sq += h * (prev[2] + integrands[2]);
                self.int_grad_ut_sq += h * (prev[3] + integrands[3]);
            }
        }
        self.sup_grad_d_l3 = self.sup_grad_d_l3.max(s.grad_d_l3);
        self.sup_rho_dev = self.sup_rho_dev.max(s.rho_dev_linf);
        self.sup_grad_rho_lq_sq = self.sup_grad_rho_lq_sq.max(integrands[0]);
        self.sup_grad_rho_l2_sq = self.sup_grad_rho_l2_sq.max(integrands[1]);
        self.sup_grad_u_sq = self.sup_grad_u_sq.max(s.grad_u_l2 * s.grad_u_l2);
        self.sup_rho_ut_sq = self.sup_rho_ut_sq.max(integrands[2]);
        self.last = Some((s.t, integrands));
        self.ticks += 1;
    }

    pub fn e_d(&self) -> f64 {
        self.sup_grad_d_l3
    }

    pub fn e_rho1(&self) -> f64 {
        self.sup_rho_dev
    }

    pub fn e_rho2(&self) -> f64 {
        self.sup_grad_rho_lq_sq + self.rho_factor * self.int_grad_rho_lq_sq
    }

    pub fn e_rho3(&self) -> f64 {
        self.sup_grad_rho_l2_sq + self.rho_factor * self.int_grad_rho_l2_sq
    }

    pub fn e_u1(&self) -> f64 {
        self.weight * self.sup_grad_u_sq + 0.5 * self.int_rho_ut_sq
    }

    pub fn e_u2(&self) -> f64 {
        self.sup_rho_ut_sq + self.weight * self.int_grad_ut_sq
    }

    /// `[E_d, E_rho1, E_rho2, E_rho3, E_u1, E_u2]`.
    pub fn values(&self) -> [f64; 6] {
        [self.e_d(), self.e_rho1(), self.e_rho2(), self.e_rho3(), self.e_u1(), self.e_u2()]
    }

    pub const NAMES: [&'static str; 6] = ["E_d", "E_rho1", "E_rho2", "E_rho3", "E_u1", "E_u2"];

    /// `key = value` lines for the run manifest.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (name, v) in Self::NAMES.iter().zip(self.values()) {
            out.push_str(&format!("bootstrap.{name} = {v:.16e}\n"));
        }
        out.push_str(&format!("bootstrap.N3 = {:.16e}\n", self.n3));
        out.push_str(&format!("bootstrap.ticks = {}\n", self.ticks));
        out
    }
}

/// Evaluates the tick norms of `state` (at time `state.t`) and folds them into `report`.
pub fn bootstrap_update(
    report: &BootstrapReport,
    calc: &Calculus,
    state: &State,
    p: &PhysParams,
    readings: Readings,
) -> Result<BootstrapReport, FieldError> {
    let obs = observe(calc, state, p, readings, 0.0)?;
    let mut next = report.clone();
    next.absorb(&obs.sample);
    Ok(next)
}
