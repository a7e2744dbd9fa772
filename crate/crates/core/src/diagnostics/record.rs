use std::io::{self, Write};

use crate::calculus::Calculus;
use crate::error::FieldError;
use crate::field::{unit_defect, same_grid};
use crate::model::{velocity_tendency, Derivatives, PhysParams, State};
use crate::norms::{lp_of_magnitudes, pairwise_sum, pairwise_sum_map};

use super::{energy_from, flux_residual_from, Readings, TickSample};

/// Column names of the run-record CSV, in order.
pub const RECORD_COLUMNS: [&str; 16] = [
    "t",
    "total_energy",
    "mass",
    "grad_d_l2",
    "grad_d_l3",
    "hess_d_l2",
    "rho_dev_linf",
    "grad_rho_l2",
    "grad_rho_lq",
    "grad_u_l2",
    "grad_u_linf",
    "sqrt_rho_ut_l2",
    "flux_residual",
    "unit_defect",
    "dt",
    "blowup_flags",
];

/// One row of monitored quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub t: f64,
    pub total_energy: f64,
    pub mass: f64,
    pub grad_d_l2: f64,
    pub grad_d_l3: f64,
    pub hess_d_l2: f64,
    pub rho_dev_linf: f64,
    pub grad_rho_l2: f64,
    pub grad_rho_lq: f64,
    pub grad_u_l2: f64,
    pub grad_u_linf: f64,
    pub sqrt_rho_ut_l2: f64,
    pub flux_residual: f64,
    pub unit_defect: f64,
    /// Step size that produced this state (0 for the initial record).
    pub dt: f64,
    /// Bit set of triggered blow-up criteria, see `integrator::BlowUpReason::flag`.
    pub blowup_flags: u32,
}

impl RunRecord {
    pub fn values(&self) -> [f64; 15] {
        [
            self.t,
            self.total_energy,
            self.mass,
            self.grad_d_l2,
            self.grad_d_l3,
            self.hess_d_l2,
            self.rho_dev_linf,
            self.grad_rho_l2,
            self.grad_rho_lq,
            self.grad_u_l2,
            self.grad_u_linf,
            self.sqrt_rho_ut_l2,
            self.flux_residual,
            self.unit_defect,
            self.dt,
        ]
    }

    pub fn header() -> String {
        RECORD_COLUMNS.join(",")
    }

    /// Floats with 17 significant digits.
    pub fn csv_row(&self) -> String {
        let mut s = String::with_capacity(400);
        for v in self.values() {
            s.push_str(&format!("{v:.16e},"));
        }
        s.push_str(&self.blowup_flags.to_string());
        s
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// A record together with the bootstrap norms computed from the same derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub record: RunRecord,
    pub sample: TickSample,
}

fn frobenius(comps: &[Vec<f64>], n: usize) -> f64 {
    comps.iter().map(|c| c[n] * c[n]).sum::<f64>().sqrt()
}

/// Evaluates every per-tick diagnostic of `state`.
pub fn observe(calc: &Calculus, state: &State, p: &PhysParams, readings: Readings, dt: f64) -> Result<Observation, FieldError> {
    same_grid(calc.grid(), state.grid())?;
    state.validate()?;
    let grid = *state.grid();
    let cell = grid.cell_volume();
    let len = grid.len();
    let view = state.view();
    let der = Derivatives::compute(calc, view);
    let ut = velocity_tendency(calc, view, p, &der);
    let rho = state.rho.data();

    let grad_d: Vec<f64> = (0..len).map(|n| frobenius(&der.jd, n)).collect();
    let grad_u: Vec<f64> = (0..len).map(|n| frobenius(&der.ju, n)).collect();
    let prho = calc.prepare(rho);
    let grho: [Vec<f64>; 3] = std::array::from_fn(|a| calc.d1(&prho, a));
    let grad_rho: Vec<f64> = (0..len).map(|n| frobenius(&grho, n)).collect();
    let rho_ut_sq: Vec<f64> = (0..len)
        .map(|n| rho[n] * (ut[0][n] * ut[0][n] + ut[1][n] * ut[1][n] + ut[2][n] * ut[2][n]))
        .collect();
    let mut grad_ut_sq = 0.0;
    for c in &ut {
        let pc = calc.prepare(c);
        for a in 0..3 {
            grad_ut_sq += pairwise_sum_map(&calc.d1(&pc, a), |x| x * x);
        }
    }
    let n3_density: Vec<f64> = (0..len)
        .map(|n| {
            let mut dd = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let d = 0.5 * (der.ju[3 * i + j][n] + der.ju[3 * j + i][n]);
                    dd += d * d;
                }
            }
            let div = der.div_u(n);
            2.0 * p.mu1 * dd + p.mu2 * div * div
        })
        .collect();

    let grad_d_l3 = lp_of_magnitudes(&grad_d, 3.0, cell);
    let grad_rho_l2 = lp_of_magnitudes(&grad_rho, 2.0, cell);
    let grad_rho_lq = lp_of_magnitudes(&grad_rho, p.q, cell);
    let grad_u_l2 = lp_of_magnitudes(&grad_u, 2.0, cell);
    let sqrt_rho_ut_l2 = (pairwise_sum(&rho_ut_sq) * cell).sqrt();
    let rho_dev_linf = rho.iter().fold(0.0f64, |m, r| m.max((r - p.rho_bar).abs()));

    let record = RunRecord {
        t: state.t,
        total_energy: energy_from(view, p, &der),
        mass: pairwise_sum(rho) * cell,
        grad_d_l2: lp_of_magnitudes(&grad_d, 2.0, cell),
        grad_d_l3,
        hess_d_l2: calc.hessian_sq_norm(state.d.as_vector())?.sqrt(),
        rho_dev_linf,
        grad_rho_l2,
        grad_rho_lq,
        grad_u_l2,
        grad_u_linf: lp_of_magnitudes(&grad_u, f64::INFINITY, cell),
        sqrt_rho_ut_l2,
        flux_residual: flux_residual_from(calc, view, p, &der, &ut, readings.h_reading),
        unit_defect: unit_defect(state.d.as_vector()),
        dt,
        blowup_flags: 0,
    };
    let sample = TickSample {
        t: state.t,
        grad_d_l3,
        rho_dev_linf,
        grad_rho_lq,
        grad_rho_l2,
        grad_u_l2,
        sqrt_rho_ut_l2,
        grad_ut_l2: (grad_ut_sq * cell).sqrt(),
        n3: pairwise_sum(&n3_density) * cell,
    };
    Ok(Observation { record, sample })
}

/// Streams records as CSV, writing the header before the first row.
pub struct RecordWriter<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            header_written: false,
        }
    }

    pub fn write(&mut self, r: &RunRecord) -> io::Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", RunRecord::header())?;
            self.header_written = true;
        }
        writeln!(self.out, "{}", r.csv_row())
    }

    pub fn finish(mut self) -> io::Result<W> {
        if !self.header_written {
            writeln!(self.out, "{}", RunRecord::header())?;
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_records_csv<W: Write>(out: W, records: &[RunRecord]) -> io::Result<W> {
    let mut w = RecordWriter::new(out);
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CalculusMode, Grid};

    #[test]
    fn csv_has_sixteen_columns_and_full_precision() {
        let grid = Grid::cube(8).unwrap();
        let p = PhysParams::default();
        let calc = Calculus::new(grid, CalculusMode::Spectral);
        let s = State::equilibrium(grid, &p).unwrap();
        let obs = observe(&calc, &s, &p, Readings::default(), 0.0).unwrap();
        let text = String::from_utf8(write_records_csv(Vec::new(), &[obs.record]).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].split(',').count(), 16);
        let row: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(row.len(), 16);
        let mass: f64 = row[2].parse().unwrap();
        assert_eq!(mass, obs.record.mass);
        assert_eq!(obs.record.total_energy, 0.0);
        assert_eq!(obs.sample.n3, 0.0);
    }
}
