//! Scalar numerical primitives: Pearson correlation, Fisher transforms,
//! quantiles, Simpson quadrature, the integral z-to-r transform and the
//! truncated-normal mean shift.

mod quadrature;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use quadrature::psi;
pub use quadrature::{integral_z_to_r, simpson_integrate, QuadratureSpec, DEGENERATE_TAU2};
pub use special::{normal_cdf, normal_pdf, normal_quantile, t_quantile};

/// Bound applied to |r| before any Fisher transform.
pub const DEFAULT_CLAMP: f64 = 0.999;

/// A correlation in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrelationValue(pub(crate) f64);

impl CorrelationValue {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFinite(value));
        }
        if value.abs() > 1.0 {
            return Err(Error::CorrelationOutOfRange(value));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<CorrelationValue> for f64 {
    fn from(r: CorrelationValue) -> f64 {
        r.0
    }
}

/// A finite value on the Fisher-z scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZValue(pub(crate) f64);

impl ZValue {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::NonFinite(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<ZValue> for f64 {
    fn from(z: ZValue) -> f64 {
        z.0
    }
}

/// Sample Pearson correlation of two equally long sequences.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<CorrelationValue> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(Error::SampleTooSmall { n: xs.len(), min: 3 });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    let r = sxy / (sxx * syy).sqrt();
    if !r.is_finite() {
        return Err(Error::NonFinite(r));
    }
    Ok(CorrelationValue(r.clamp(-1.0, 1.0)))
}

/// atanh(r). Callers clamp |r| away from 1 first (see [`clamp_r`]).
pub fn fisher_z(r: CorrelationValue) -> Result<ZValue> {
    if r.0.abs() >= 1.0 {
        return Err(Error::Degenerate(format!(
            "Fisher z of r = {} is infinite; clamp the correlation first",
            r.0
        )));
    }
    // std atanh is not exactly odd
    Ok(ZValue(r.0.signum() * r.0.abs().atanh()))
}

pub fn inv_fisher(z: ZValue) -> CorrelationValue {
    CorrelationValue(z.0.tanh())
}

/// Clamps `r` into `[-bound, bound]`, `bound` in (0, 1).
pub fn clamp_r(r: f64, bound: f64) -> CorrelationValue {
    assert!(bound > 0.0 && bound < 1.0, "clamp bound must lie in (0, 1)");
    assert!(!r.is_nan(), "cannot clamp NaN");
    CorrelationValue(r.clamp(-bound, bound))
}

/// Adds the first-order Hotelling bias magnitude back onto `r`:
/// `r + r(1 - r²) / (2(n - 1))`, clamped to ±0.999.
pub fn bias_corrected_r(r: CorrelationValue, n: usize) -> Result<CorrelationValue> {
    if n < 4 {
        return Err(Error::SampleTooSmall { n, min: 4 });
    }
    let r = r.0;
    let corrected = r + r * (1.0 - r * r) / (2.0 * (n as f64 - 1.0));
    Ok(clamp_r(corrected, DEFAULT_CLAMP))
}

/// Mean of N(μ, σ²) truncated to `[a, b]`, minus μ.
pub fn truncnorm_mean_shift(mu: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(a < b) {
        return Err(Error::InvalidBounds { a, b });
    }
    let lo = (a - mu) / sigma;
    let hi = (b - mu) / sigma;
    // take the difference in whichever tail keeps precision
    let mass = if lo > 0.0 {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    };
    if !(mass > 1e-300) {
        return Err(Error::Degenerate(format!(
            "truncation window [{a}, {b}] carries no mass under N({mu}, {sigma}^2)"
        )));
    }
    Ok(sigma * (normal_pdf(lo) - normal_pdf(hi)) / mass)
}
