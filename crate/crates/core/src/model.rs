//! Physics of the simplified compressible Ericksen-Leslie system: pressure and
//! viscosity laws, stresses, the three evolution right-hand sides, and the
//! admissibility predicates on the exponents.

use thiserror::Error;

use crate::calculus::Calculus;
use crate::error::{FieldError, NodeLocation};
use crate::field::{same_grid, DirectorField, Field, ScalarField, TensorField, VectorField};
use crate::grid::Grid;

/// Tolerance on `|e| = 1` for the far-field director.
pub const FAR_FIELD_UNIT_TOL: f64 = 1e-14;

/// Below this `|gamma - alpha|` the transformed pressure takes its logarithmic branch.
pub const LOG_BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{key}: {message}")]
pub struct ParamError {
    pub key: &'static str,
    pub message: String,
}

fn param_err(key: &'static str, message: impl Into<String>) -> ParamError {
    ParamError {
        key,
        message: message.into(),
    }
}

/// Model constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Entropy constant in `P = a rho^gamma`.
    pub a: f64,
    /// Adiabatic exponent.
    pub gamma: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Ericksen stress coupling.
    pub nu: f64,
    /// Director relaxation rate.
    pub lambda: f64,
    /// Viscosity power: `mu_i(rho) = mu_i rho^alpha`.
    pub alpha: f64,
    /// Background (far-field) density.
    pub rho_bar: f64,
    /// Far-field director.
    pub e: [f64; 3],
    /// Integrability exponent for the density gradient, in `(3, 6)`.
    pub q: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            gamma: 1.5,
            mu1: 1.0,
            mu2: 0.0,
            nu: 1.0,
            lambda: 1.0,
            alpha: 2.0,
            rho_bar: 4.0,
            e: [0.0, 0.0, 1.0],
            q: 4.0,
        }
    }
}

impl PhysParams {
    /// Hard physical constraints. `rho_bar > 1` and the exponent relations are
    /// hypotheses of the regularity regime, reported by [`regime_check`] instead.
    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = [
            ("a", self.a),
            ("gamma", self.gamma),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("nu", self.nu),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("rho_bar", self.rho_bar),
            ("q", self.q),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(param_err(key, format!("must be finite, got {v}")));
            }
        }
        if self.a <= 0.0 {
            return Err(param_err("a", "entropy constant must satisfy a > 0"));
        }
        if self.gamma <= 1.0 {
            return Err(param_err("gamma", "adiabatic exponent must satisfy gamma > 1"));
        }
        if self.mu1 <= 0.0 {
            return Err(param_err("mu1", "viscosity constraint requires mu1 > 0"));
        }
        if 2.0 * self.mu1 + 3.0 * self.mu2 < 0.0 {
            return Err(param_err(
                "mu2",
                format!(
                    "viscosity constraint requires 2 mu1 + 3 mu2 >= 0, got {}",
                    2.0 * self.mu1 + 3.0 * self.mu2
                ),
            ));
        }
        if self.nu <= 0.0 {
            return Err(param_err("nu", "coupling constant must be positive"));
        }
        if self.lambda <= 0.0 {
            return Err(param_err("lambda", "director relaxation must be positive"));
        }
        if self.alpha < 0.0 {
            return Err(param_err("alpha", "viscosity power must satisfy alpha >= 0"));
        }
        if self.rho_bar <= 0.0 {
            return Err(param_err("rho_bar", "background density must be positive"));
        }
        let norm = self.e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > FAR_FIELD_UNIT_TOL {
            return Err(param_err("e", format!("far-field director must be a unit vector, |e| = {norm}")));
        }
        theta_exponent(self.q).map_err(|m| param_err("q", m))?;
        Ok(())
    }

    /// `2 mu1 + mu2`, the longitudinal viscosity prefactor.
    pub fn longitudinal(&self) -> f64 {
        2.0 * self.mu1 + self.mu2
    }

    /// Digest used to tie checkpoints to the parameters that produced them.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in [
            self.a, self.gamma, self.mu1, self.mu2, self.nu, self.lambda, self.alpha, self.rho_bar, self.e[0],
            self.e[1], self.e[2], self.q,
        ] {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }
}

/// Per-condition verdict on the exponent hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeVerdict {
    pub alpha_gt_one: bool,
    pub gamma_gt_one: bool,
    pub alpha_gt_mean: bool,
    pub alpha_ge_gamma_minus_one: bool,
    /// Conjunction of the four exponent conditions.
    pub admissible: bool,
    /// `rho_bar > 1`, the standing assumption on the background density.
    pub rho_bar_gt_one: bool,
    pub beta: f64,
}

impl RegimeVerdict {
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.alpha_gt_one {
            out.push("alpha > 1");
        }
        if !self.gamma_gt_one {
            out.push("gamma > 1");
        }
        if !self.alpha_gt_mean {
            out.push("alpha > (gamma + 1) / 2");
        }
        if !self.alpha_ge_gamma_minus_one {
            out.push("alpha >= gamma - 1");
        }
        out
    }
}

pub fn regime_check(p: &PhysParams) -> RegimeVerdict {
    let alpha_gt_one = p.alpha > 1.0;
    let gamma_gt_one = p.gamma > 1.0;
    let alpha_gt_mean = p.alpha > (p.gamma + 1.0) / 2.0;
    let alpha_ge_gamma_minus_one = p.alpha >= p.gamma - 1.0;
    RegimeVerdict {
        alpha_gt_one,
        gamma_gt_one,
        alpha_gt_mean,
        alpha_ge_gamma_minus_one,
        admissible: alpha_gt_one && gamma_gt_one && alpha_gt_mean && alpha_ge_gamma_minus_one,
        rho_bar_gt_one: p.rho_bar > 1.0,
        beta: beta_exponent(p.gamma),
    }
}

pub fn beta_exponent(gamma: f64) -> f64 {
    (3.0 - gamma).max(0.0)
}

/// `2 (q - 3) / (5 q - 6)` for `q` in `(3, 6]`.
///
/// The upper endpoint is accepted because the closed interval value `1/4` is
/// the supremum of the exponent; configuration parsing rejects `q = 6`.
pub fn theta_exponent(q: f64) -> Result<f64, String> {
    if !(q > 3.0 && q <= 6.0) {
        return Err(format!("q must lie in (3, 6), got {q}"));
    }
    Ok(2.0 * (q - 3.0) / (5.0 * q - 6.0))
}

#[inline]
pub(crate) fn power(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 3.0 {
        x * x * x
    } else {
        x.powf(e)
    }
}

pub(crate) fn check_density(rho: &ScalarField) -> Result<(), FieldError> {
    rho.ensure_finite("density")?;
    let grid = *rho.grid();
    match rho.data().iter().position(|&v| v <= 0.0) {
        Some(idx) => Err(FieldError::Vacuum {
            value: rho.data()[idx],
            at: NodeLocation {
                node: grid.unravel(idx),
                component: 0,
            },
        }),
        None => Ok(()),
    }
}

/// `P = a rho^gamma`.
pub fn pressure(rho: &ScalarField, p: &PhysParams) -> Result<ScalarField, FieldError> {
    check_density(rho)?;
    Ok(rho.map(|r| p.a * power(r, p.gamma)))
}

/// `(mu1 rho^alpha, mu2 rho^alpha)`.
pub fn viscosities(rho: &ScalarField, p: &PhysParams) -> Result<(ScalarField, ScalarField), FieldError> {
    check_density(rho)?;
    Ok((
        rho.map(|r| p.mu1 * power(r, p.alpha)),
        rho.map(|r| p.mu2 * power(r, p.alpha)),
    ))
}

/// `T = 2 mu1(rho) D u + mu2(rho) (div u) I`.
pub fn viscous_stress(
    calc: &Calculus,
    u: &VectorField,
    rho: &ScalarField,
    p: &PhysParams,
) -> Result<TensorField, FieldError> {
    same_grid(u.grid(), rho.grid())?;
    check_density(rho)?;
    let ju = calc.jacobian(u)?;
    let grid = *u.grid();
    let mut out = TensorField::zeros(grid);
    for n in 0..grid.len() {
        let ra = power(rho.data()[n], p.alpha);
        let div = ju.entry(0, 0)[n] + ju.entry(1, 1)[n] + ju.entry(2, 2)[n];
        for i in 0..3 {
            for j in 0..3 {
                let d = 0.5 * (ju.entry(i, j)[n] + ju.entry(j, i)[n]);
                let iso = if i == j { p.mu2 * ra * div } else { 0.0 };
                out.entry_mut(i, j)[n] = 2.0 * p.mu1 * ra * d + iso;
            }
        }
    }
    Ok(out)
}

/// `grad d (.) grad d - |grad d|^2 I / 2`.
pub fn ericksen_stress(calc: &Calculus, d: &DirectorField) -> Result<TensorField, FieldError> {
    let jd = calc.jacobian(d.as_vector())?;
    let mut out = crate::field::outer_contract(&jd);
    let grid = *d.grid();
    for n in 0..grid.len() {
        let g2: f64 = jd.comps().iter().map(|c| c[n] * c[n]).sum();
        for i in 0..3 {
            out.entry_mut(i, i)[n] -= 0.5 * g2;
        }
    }
    Ok(out)
}

/// Density, velocity and director of one trajectory at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub rho: ScalarField,
    pub u: VectorField,
    pub d: DirectorField,
    pub t: f64,
}

impl State {
    /// The constant state `(rho_bar, 0, e)`.
    pub fn equilibrium(grid: Grid, p: &PhysParams) -> Result<Self, FieldError> {
        Ok(Self {
            rho: ScalarField::constant(grid, p.rho_bar),
            u: VectorField::zeros(grid),
            d: DirectorField::uniform(grid, p.e)?,
            t: 0.0,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    /// Shared grid, finite entries, positive density.
    pub fn validate(&self) -> Result<(), FieldError> {
        same_grid(self.rho.grid(), self.u.grid())?;
        same_grid(self.rho.grid(), self.d.grid())?;
        check_density(&self.rho)?;
        self.u.ensure_finite("velocity")?;
        self.d.ensure_finite("director")
    }
}

/// Time derivatives of `(rho, u, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tendency {
    pub rho: ScalarField,
    pub u: VectorField,
    pub d: VectorField,
}

/// Borrowed `(rho, u, d)` where `d` need not be unit length (Runge-Kutta stages).
#[derive(Clone, Copy)]
pub(crate) struct FieldsRef<'a> {
    pub rho: &'a ScalarField,
    pub u: &'a VectorField,
    pub d: &'a VectorField,
}

impl State {
    pub(crate) fn view(&self) -> FieldsRef<'_> {
        FieldsRef {
            rho: &self.rho,
            u: &self.u,
            d: self.d.as_vector(),
        }
    }
}

/// Spatial derivatives shared by the right-hand sides and the diagnostics.
pub(crate) struct Derivatives {
    /// `J_ij = d_j u_i`.
    pub ju: [Vec<f64>; 9],
    /// `J_ij = d_j d_i`.
    pub jd: [Vec<f64>; 9],
    pub lap_d: [Vec<f64>; 3],
}

impl Derivatives {
    pub fn compute(calc: &Calculus, state: FieldsRef) -> Self {
        let mut ju: [Vec<f64>; 9] = Default::default();
        let mut jd: [Vec<f64>; 9] = Default::default();
        let mut lap_d: [Vec<f64>; 3] = Default::default();
        let dv = state.d;
        for i in 0..3 {
            let pu = calc.prepare(state.u.component(i));
            let pd = calc.prepare(dv.component(i));
            for j in 0..3 {
                ju[3 * i + j] = calc.d1(&pu, j);
                jd[3 * i + j] = calc.d1(&pd, j);
            }
            lap_d[i] = calc.lap(&pd);
        }
        Self { ju, jd, lap_d }
    }

    #[inline]
    pub fn grad_d_sq(&self, n: usize) -> f64 {
        self.jd.iter().map(|c| c[n] * c[n]).sum()
    }

    #[inline]
    pub fn div_u(&self, n: usize) -> f64 {
        self.ju[0][n] + self.ju[4][n] + self.ju[8][n]
    }
}

/// `div(T - nu sigma - P I)` as three rasters, without the `1/rho` factor.
pub(crate) fn momentum_force(calc: &Calculus, state: FieldsRef, p: &PhysParams, der: &Derivatives) -> [Vec<f64>; 3] {
    const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let len = state.rho.grid().len();
    let rho = state.rho.data();
    let mut stress: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; len]);
    for n in 0..len {
        let r = rho[n];
        let ra = power(r, p.alpha);
        let pres = p.a * power(r, p.gamma);
        let div = der.div_u(n);
        let g2 = der.grad_d_sq(n);
        for (s, &(i, j)) in stress.iter_mut().zip(&UPPER) {
            let def = 0.5 * (der.ju[3 * i + j][n] + der.ju[3 * j + i][n]);
            let erick = (0..3).map(|k| der.jd[3 * k + i][n] * der.jd[3 * k + j][n]).sum::<f64>();
            let mut v = 2.0 * p.mu1 * ra * def - p.nu * erick;
            if i == j {
                v += p.mu2 * ra * div + 0.5 * p.nu * g2 - pres;
            }
            s[n] = v;
        }
    }
    calc.div_symmetric_raw([&stress[0], &stress[1], &stress[2], &stress[3], &stress[4], &stress[5]])
}

pub(crate) fn velocity_tendency(calc: &Calculus, state: FieldsRef, p: &PhysParams, der: &Derivatives) -> [Vec<f64>; 3] {
    let force = momentum_force(calc, state, p, der);
    let rho = state.rho.data();
    let u = state.u.comps();
    std::array::from_fn(|i| {
        let raw: Vec<f64> = (0..rho.len())
            .map(|n| {
                let adv = u[0][n] * der.ju[3 * i][n] + u[1][n] * der.ju[3 * i + 1][n] + u[2][n] * der.ju[3 * i + 2][n];
                -adv + force[i][n] / rho[n]
            })
            .collect();
        calc.dealias_raw(raw)
    })
}

pub(crate) fn director_tendency(calc: &Calculus, state: FieldsRef, p: &PhysParams, der: &Derivatives) -> [Vec<f64>; 3] {
    let u = state.u.comps();
    let d = state.d.comps();
    std::array::from_fn(|i| {
        let raw: Vec<f64> = (0..u[0].len())
            .map(|n| {
                let adv = u[0][n] * der.jd[3 * i][n] + u[1][n] * der.jd[3 * i + 1][n] + u[2][n] * der.jd[3 * i + 2][n];
                -adv + p.lambda * (der.lap_d[i][n] + der.grad_d_sq(n) * d[i][n])
            })
            .collect();
        calc.dealias_raw(raw)
    })
}

pub(crate) fn continuity_tendency(calc: &Calculus, state: FieldsRef) -> Vec<f64> {
    let rho = state.rho.data();
    let flux: [Vec<f64>; 3] =
        std::array::from_fn(|i| rho.iter().zip(state.u.component(i)).map(|(r, v)| r * v).collect());
    let div = calc.div_raw([&flux[0], &flux[1], &flux[2]]);
    div.into_iter().map(|v| -v).collect()
}

fn checked(calc: &Calculus, state: &State) -> Result<(), FieldError> {
    same_grid(calc.grid(), state.grid())?;
    state.validate()
}

/// `-div(rho u)`.
pub fn continuity_rhs(calc: &Calculus, state: &State) -> Result<ScalarField, FieldError> {
    checked(calc, state)?;
    ScalarField::from_vec(*state.grid(), continuity_tendency(calc, state.view()))
}

/// `u_t = -u . grad u + rho^{-1} [ -grad P + div T - nu div(grad d (.) grad d - |grad d|^2 I / 2) ]`.
pub fn velocity_rhs(calc: &Calculus, state: &State, p: &PhysParams) -> Result<VectorField, FieldError> {
    checked(calc, state)?;
    let der = Derivatives::compute(calc, state.view());
    VectorField::from_components(*state.grid(), velocity_tendency(calc, state.view(), p, &der))
}

/// `-u . grad d + lambda (lap d + |grad d|^2 d)`.
pub fn director_rhs(calc: &Calculus, state: &State, p: &PhysParams) -> Result<VectorField, FieldError> {
    checked(calc, state)?;
    let der = Derivatives::compute(calc, state.view());
    VectorField::from_components(*state.grid(), director_tendency(calc, state.view(), p, &der))
}

/// All three right-hand sides sharing one set of derivatives.
pub fn rhs(calc: &Calculus, state: &State, p: &PhysParams) -> Result<Tendency, FieldError> {
    checked(calc, state)?;
    Ok(rhs_unchecked(calc, state.view(), p))
}

pub(crate) fn rhs_unchecked(calc: &Calculus, state: FieldsRef, p: &PhysParams) -> Tendency {
    let grid = *state.rho.grid();
    let der = Derivatives::compute(calc, state);
    let assemble = || -> Result<Tendency, FieldError> {
        Ok(Tendency {
            rho: ScalarField::from_vec(grid, continuity_tendency(calc, state))?,
            u: VectorField::from_components(grid, velocity_tendency(calc, state, p, &der))?,
            d: VectorField::from_components(grid, director_tendency(calc, state, p, &der))?,
        })
    };
    assemble().expect("rasters are built on the state's grid")
}
