//! Discrete L^p norms with a fixed pairwise summation order.
//!
//! Integrals use the rectangle rule `sum f h1 h2 h3`, which is spectrally
//! accurate for smooth periodic integrands. Every reduction goes through
//! [`pairwise_sum_map`], whose association order depends only on the length,
//! so results are bitwise reproducible.

use crate::calculus::Calculus;
use crate::error::FieldError;
use crate::field::{Field, ScalarField, VectorField};

const BLOCK: usize = 64;

/// Sum of `f(x)` over `data` with a length-determined binary tree.
pub fn pairwise_sum_map(data: &[f64], f: impl Fn(f64) -> f64 + Copy) -> f64 {
    if data.len() <= BLOCK {
        let mut acc = 0.0;
        for &x in data {
            acc += f(x);
        }
        return acc;
    }
    let mid = data.len() / 2;
    pairwise_sum_map(&data[..mid], f) + pairwise_sum_map(&data[mid..], f)
}

pub fn pairwise_sum(data: &[f64]) -> f64 {
    pairwise_sum_map(data, |x| x)
}

/// `integral f dx` by the rectangle rule.
pub fn integrate(f: &ScalarField) -> f64 {
    pairwise_sum(f.data()) * f.grid().cell_volume()
}

fn validate_exponent(p: f64) -> Result<(), FieldError> {
    if p == f64::INFINITY || (p.is_finite() && p >= 1.0) {
        Ok(())
    } else {
        Err(FieldError::UnsupportedExponent(p))
    }
}

/// Pointwise magnitudes of any field (absolute value, Euclidean or Frobenius).
pub fn magnitudes(f: &impl Field) -> Vec<f64> {
    (0..f.grid().len()).map(|i| f.magnitude_at(i)).collect()
}

/// `|| f ||_{L^p}`; `p = f64::INFINITY` gives the nodal maximum.
pub fn lp_norm(f: &impl Field, p: f64) -> Result<f64, FieldError> {
    validate_exponent(p)?;
    let mags = magnitudes(f);
    Ok(lp_of_magnitudes(&mags, p, f.grid().cell_volume()))
}

pub(crate) fn lp_of_magnitudes(mags: &[f64], p: f64, cell: f64) -> f64 {
    if p == f64::INFINITY {
        return mags.iter().copied().fold(0.0, f64::max);
    }
    let s = if p == 2.0 {
        pairwise_sum_map(mags, |m| m * m)
    } else if p == 1.0 {
        pairwise_sum(mags)
    } else {
        pairwise_sum_map(mags, |m| m.powf(p))
    };
    (s * cell).powf(1.0 / p)
}

/// `|| grad f ||_{L^p}` for a scalar field.
pub fn lp_norm_grad(calc: &Calculus, f: &ScalarField, p: f64) -> Result<f64, FieldError> {
    validate_exponent(p)?;
    lp_norm(&calc.gradient(f)?, p)
}

/// `|| grad v ||_{L^p}` with the Frobenius norm of the Jacobian.
pub fn lp_norm_grad_vector(calc: &Calculus, v: &VectorField, p: f64) -> Result<f64, FieldError> {
    validate_exponent(p)?;
    lp_norm(&calc.jacobian(v)?, p)
}

/// `L^2` inner product of two vector fields.
pub fn inner(a: &VectorField, b: &VectorField) -> Result<f64, FieldError> {
    let dot = crate::field::dot_field(a, b)?;
    Ok(integrate(&dot))
}
