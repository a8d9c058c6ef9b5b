//! Composite Simpson quadrature and the integral z-to-r transform.

use crate::error::{Error, Result};

use super::special::normal_pdf;
use super::{CorrelationValue, ZValue};

/// Below this z-scale heterogeneity the integral transform collapses to `tanh`.
pub const DEGENERATE_TAU2: f64 = 1e-12;

/// Panel layout for the integral back-transform: `subintervals` Simpson
/// panels spread over `mean ± half_width_multiplier · sd`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    subintervals: usize,
    half_width_multiplier: f64,
}

impl QuadratureSpec {
    pub fn new(subintervals: usize, half_width_multiplier: f64) -> Result<Self> {
        if subintervals == 0 || !subintervals.is_multiple_of(2) {
            return Err(Error::InvalidQuadrature(format!(
                "Simpson's rule needs a positive even number of subintervals, got {subintervals}"
            )));
        }
        if !(half_width_multiplier > 0.0 && half_width_multiplier.is_finite()) {
            return Err(Error::InvalidQuadrature(format!(
                "half-width multiplier must be positive, got {half_width_multiplier}"
            )));
        }
        Ok(Self {
            subintervals,
            half_width_multiplier,
        })
    }

    pub fn subintervals(&self) -> usize {
        self.subintervals
    }

    pub fn half_width_multiplier(&self) -> f64 {
        self.half_width_multiplier
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            subintervals: 150,
            half_width_multiplier: 5.0,
        }
    }
}

/// Composite Simpson approximation of ∫ₐᵇ f over `spec.subintervals()` equal panels.
pub fn simpson_integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidBounds { a, b });
    }
    Ok(simpson(&f, a, b, spec.subintervals))
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..panels {
        let x = a + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// ψ(μ | τ²) = E[tanh(Z)] for Z ~ N(μ, τ²).
///
/// The window is `μ ± k·τ` with `k = spec.half_width_multiplier()`; mass
/// outside it is dropped, not renormalized.
pub fn integral_z_to_r(mu_z: ZValue, tau_z2: f64, spec: &QuadratureSpec) -> Result<CorrelationValue> {
    if tau_z2 < 0.0 || tau_z2.is_nan() {
        return Err(Error::NegativeVariance(tau_z2));
    }
    Ok(CorrelationValue(psi(mu_z.get(), tau_z2, spec)))
}

pub(crate) fn psi(mu: f64, tau2: f64, spec: &QuadratureSpec) -> f64 {
    if tau2 < DEGENERATE_TAU2 {
        return mu.tanh();
    }
    let tau = tau2.sqrt();
    let half = spec.half_width_multiplier * tau;
    let density = |t: f64| t.tanh() * normal_pdf((t - mu) / tau) / tau;
    simpson(&density, mu - half, mu + half, spec.subintervals)
}
