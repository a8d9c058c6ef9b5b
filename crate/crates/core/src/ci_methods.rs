//! Confidence intervals for the pooled correlation.
//!
//! Every method is a pair (variance estimator, interval recipe):
//!
//! | method | centre | variance | quantile | back-transform |
//! |--------|--------|----------|----------|----------------|
//! | HS     | r_HS   | Osburn-Callender | normal | none |
//! | HOVz   | z̄     | (Σw)⁻¹   | normal   | tanh |
//! | KH     | z̄     | Knapp-Hartung | t(K-1) | integral |
//! | WBS1-3 | z̄     | wild bootstrap, γ ∈ {1, (K-1)/(K-3), (K-2)/(K-3)} | t(K-1) | integral |
//! | HC3/4  | z̄     | sandwich | t(K-1)   | integral |
//!
//! All z-based methods share one Sidik-Jonkman τ² for both the weights and
//! the integral back-transform.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::{hs_pooled_r, iv_pooled, sj_tau2, to_z_scale_clamped, PooledZ, StudySummary, ZStudy};
use crate::stats_core::{bias_corrected_r, normal_quantile, psi, t_quantile, QuadratureSpec, DEFAULT_CLAMP};
use crate::streams::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CiMethod {
    #[serde(rename = "HOVz")]
    Hovz,
    #[serde(rename = "HS")]
    Hs,
    #[serde(rename = "KH")]
    Kh,
    #[serde(rename = "WBS1")]
    Wbs1,
    #[serde(rename = "WBS2")]
    Wbs2,
    #[serde(rename = "WBS3")]
    Wbs3,
    #[serde(rename = "HC3")]
    Hc3,
    #[serde(rename = "HC4")]
    Hc4,
}

impl CiMethod {
    pub const ALL: [CiMethod; 8] = [
        CiMethod::Hovz,
        CiMethod::Hs,
        CiMethod::Kh,
        CiMethod::Wbs1,
        CiMethod::Wbs2,
        CiMethod::Wbs3,
        CiMethod::Hc3,
        CiMethod::Hc4,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            CiMethod::Hovz => "HOVz",
            CiMethod::Hs => "HS",
            CiMethod::Kh => "KH",
            CiMethod::Wbs1 => "WBS1",
            CiMethod::Wbs2 => "WBS2",
            CiMethod::Wbs3 => "WBS3",
            CiMethod::Hc3 => "HC3",
            CiMethod::Hc4 => "HC4",
        }
    }

    /// Fewest studies for which the method is defined.
    pub fn min_studies(self) -> usize {
        match self {
            CiMethod::Hs => 1,
            CiMethod::Hovz | CiMethod::Kh | CiMethod::Hc3 | CiMethod::Hc4 => 2,
            CiMethod::Wbs1 | CiMethod::Wbs2 | CiMethod::Wbs3 => 4,
        }
    }

    pub fn is_z_based(self) -> bool {
        self != CiMethod::Hs
    }

    pub fn gamma_mode(self) -> Option<GammaMode> {
        match self {
            CiMethod::Wbs1 => Some(GammaMode::One),
            CiMethod::Wbs2 => Some(GammaMode::Km1OverKm3),
            CiMethod::Wbs3 => Some(GammaMode::Km2OverKm3),
            _ => None,
        }
    }

    fn check_k(self, k: usize) -> Result<()> {
        if k < self.min_studies() {
            return Err(Error::TooFewStudies {
                method: self.tag(),
                k,
                min: self.min_studies(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CiMethod::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backtransform {
    Tanh,
    Integral,
    None,
}

impl fmt::Display for Backtransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backtransform::Tanh => "tanh",
            Backtransform::Integral => "integral",
            Backtransform::None => "none",
        })
    }
}

impl FromStr for Backtransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Backtransform::Tanh),
            "integral" | "psi" => Ok(Backtransform::Integral),
            "none" => Ok(Backtransform::None),
            other => Err(Error::InvalidParameter(format!("unknown back-transform `{other}`"))),
        }
    }
}

/// Variance of the wild-bootstrap multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaMode {
    One,
    Km1OverKm3,
    Km2OverKm3,
}

impl GammaMode {
    pub fn gamma(self, k: usize) -> Result<f64> {
        if self != GammaMode::One && k <= 3 {
            return Err(Error::TooFewStudies {
                method: "wild bootstrap (ratio gamma)",
                k,
                min: 4,
            });
        }
        let k = k as f64;
        Ok(match self {
            GammaMode::One => 1.0,
            GammaMode::Km1OverKm3 => (k - 1.0) / (k - 3.0),
            GammaMode::Km2OverKm3 => (k - 2.0) / (k - 3.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub reps: usize,
    pub gamma_mode: GammaMode,
    pub rng_seed: u64,
}

impl BootstrapSpec {
    pub const DEFAULT_REPS: usize = 1000;

    pub fn new(reps: usize, gamma_mode: GammaMode, rng_seed: u64) -> Result<Self> {
        if reps < 2 {
            return Err(Error::InvalidParameter(format!(
                "bootstrap needs at least 2 replicates, got {reps}"
            )));
        }
        Ok(Self {
            reps,
            gamma_mode,
            rng_seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HcVariant {
    Hc3,
    Hc4,
}

/// A finished interval.
///
/// `center` and `se` live on the z-scale for every z-based method; for HS
/// (`backtransform == None`) they are on the correlation scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub method: CiMethod,
    pub point_r: f64,
    pub lower_r: f64,
    pub upper_r: f64,
    pub center: f64,
    pub se: f64,
    pub tau2_z: f64,
    pub alpha: f64,
    pub df: Option<u64>,
    pub backtransform: Backtransform,
}

impl CiResult {
    pub fn length(&self) -> f64 {
        self.upper_r - self.lower_r
    }

    pub fn covers(&self, rho: f64) -> bool {
        self.lower_r <= rho && rho <= self.upper_r
    }
}

/// Plain HOVz variance `(Σ wᵢ)⁻¹`.
pub fn naive_z_variance(pooled: &PooledZ) -> f64 {
    1.0 / pooled.total_weight()
}

/// Knapp-Hartung variance `(1/(K-1)) Σ (wᵢ/w)(zᵢ - z̄)²`.
pub fn kh_variance(zstudies: &[ZStudy], pooled: &PooledZ) -> Result<f64> {
    let k = check_pairing(zstudies, pooled)?;
    CiMethod::Kh.check_k(k)?;
    let total = pooled.total_weight();
    let zbar = pooled.z_bar.get();
    let ss: f64 = zstudies
        .iter()
        .zip(&pooled.weights)
        .map(|(s, w)| w / total * (s.z.get() - zbar).powi(2))
        .sum();
    Ok(ss / (k as f64 - 1.0))
}

/// HC3/HC4 sandwich variance with leverages `x_jj = w_j / Σ wᵢ`.
pub fn hc_variance(zstudies: &[ZStudy], pooled: &PooledZ, variant: HcVariant) -> Result<f64> {
    let k = check_pairing(zstudies, pooled)?;
    CiMethod::Hc3.check_k(k)?;
    let total = pooled.total_weight();
    let zbar = pooled.z_bar.get();
    let mean_leverage = 1.0 / k as f64;
    let mut acc = 0.0;
    for (s, &w) in zstudies.iter().zip(&pooled.weights) {
        let leverage = w / total;
        if leverage >= 1.0 {
            return Err(Error::Degenerate(format!(
                "study leverage {leverage} leaves no residual degrees of freedom"
            )));
        }
        let exponent = match variant {
            HcVariant::Hc3 => 2.0,
            HcVariant::Hc4 => (leverage / mean_leverage).min(4.0),
        };
        let resid = s.z.get() - zbar;
        acc += w * w * resid * resid / (1.0 - leverage).powf(exponent);
    }
    Ok(acc / (total * total))
}

/// Osburn-Callender variance `(1/K) Σ nᵢ(rᵢ - r_HS)² / Σ nᵢ`.
pub fn hs_variance(studies: &[StudySummary], r_hs: f64) -> Result<f64> {
    if studies.is_empty() {
        return Err(Error::TooFewStudies {
            method: "HS",
            k: 0,
            min: 1,
        });
    }
    let n_total: f64 = studies.iter().map(|s| s.n as f64).sum();
    let ss: f64 = studies.iter().map(|s| s.n as f64 * (s.r.get() - r_hs).powi(2)).sum();
    Ok(ss / n_total / studies.len() as f64)
}

/// Wild-bootstrap variance of z̄.
///
/// Residuals are `ε̂ᵢ = z̄ - zᵢ`; replicate `b` draws `vᵢ ~ N(0, γ)` from
/// substream `b` of `spec.rng_seed` (one draw per study, in study order),
/// forms `zᵢ + ε̂ᵢ vᵢ` and pools with the original weights. Returns the
/// sample variance (divisor B - 1) of the replicate means.
pub fn wild_bootstrap_variance(zstudies: &[ZStudy], pooled: &PooledZ, spec: &BootstrapSpec) -> Result<f64> {
    let k = check_pairing(zstudies, pooled)?;
    if k < 2 {
        return Err(Error::TooFewStudies {
            method: "wild bootstrap",
            k,
            min: 2,
        });
    }
    if spec.reps < 2 {
        return Err(Error::InvalidParameter("bootstrap needs at least 2 replicates".into()));
    }
    let gamma = spec.gamma_mode.gamma(k)?;
    Ok(bootstrap_unit_variance(
        zstudies,
        pooled,
        spec.reps,
        spec.rng_seed,
        gamma.sqrt(),
    ))
}

fn bootstrap_unit_variance(zstudies: &[ZStudy], pooled: &PooledZ, reps: usize, seed: u64, scale: f64) -> f64 {
    let total = pooled.total_weight();
    let zbar = pooled.z_bar.get();
    // residual terms pre-multiplied by their normalized weights
    let base: f64 = zstudies
        .iter()
        .zip(&pooled.weights)
        .map(|(s, w)| w / total * s.z.get())
        .sum();
    let spread: Vec<f64> = zstudies
        .iter()
        .zip(&pooled.weights)
        .map(|(s, w)| w / total * (zbar - s.z.get()) * scale)
        .collect();
    if spread.iter().all(|&e| e == 0.0) {
        return 0.0;
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for b in 0..reps {
        let mut rng = stream_rng(seed, b as u64);
        let mut zstar = base;
        for e in &spread {
            let v: f64 = StandardNormal.sample(&mut rng);
            zstar += e * v;
        }
        let delta = zstar - mean;
        mean += delta / (b as f64 + 1.0);
        m2 += delta * (zstar - mean);
    }
    m2 / (reps as f64 - 1.0)
}

fn check_pairing(zstudies: &[ZStudy], pooled: &PooledZ) -> Result<usize> {
    if zstudies.len() != pooled.weights.len() {
        return Err(Error::LengthMismatch(zstudies.len(), pooled.weights.len()));
    }
    Ok(zstudies.len())
}

/// Centre, standard error and heterogeneity of an interval before back-transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZInterval {
    pub center: f64,
    pub se: f64,
    /// Student-t degrees of freedom; `None` selects the normal quantile.
    pub df: Option<u64>,
    pub tau2_z: f64,
}

/// `centre ± q·se`, then mapped back to the correlation scale.
pub fn build_ci(
    method: CiMethod,
    interval: ZInterval,
    alpha: f64,
    backtransform: Backtransform,
    quadrature: &QuadratureSpec,
) -> Result<CiResult> {
    let ZInterval { center, se, df, tau2_z } = interval;
    if !(se >= 0.0) || !se.is_finite() {
        return Err(Error::NegativeVariance(se));
    }
    if !center.is_finite() {
        return Err(Error::NonFinite(center));
    }
    let p = 1.0 - alpha / 2.0;
    let q = match df {
        Some(df) => t_quantile(p, df)?,
        None => normal_quantile(p)?,
    };
    let lo = center - q * se;
    let hi = center + q * se;
    let (point_r, lower_r, upper_r) = match backtransform {
        Backtransform::Tanh => (center.tanh(), lo.tanh(), hi.tanh()),
        Backtransform::Integral => {
            if tau2_z < 0.0 {
                return Err(Error::NegativeVariance(tau2_z));
            }
            (
                psi(center, tau2_z, quadrature),
                psi(lo, tau2_z, quadrature),
                psi(hi, tau2_z, quadrature),
            )
        }
        Backtransform::None => (center, lo.max(-1.0), hi.min(1.0)),
    };
    if !(lower_r <= upper_r) {
        return Err(Error::Degenerate(format!(
            "back-transformed bounds out of order: [{lower_r}, {upper_r}]"
        )));
    }
    Ok(CiResult {
        method,
        point_r,
        lower_r,
        upper_r,
        center,
        se,
        tau2_z,
        alpha,
        df,
        backtransform,
    })
}

/// Knobs shared by all methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiOptions {
    /// Replaces the default back-transform of z-based methods.
    pub backtransform: Option<Backtransform>,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub quadrature: QuadratureSpec,
    pub clamp_bound: f64,
    /// Apply [`bias_corrected_r`] to each study before pooling.
    pub bias_correction: bool,
    /// Force τ² = 0 (fixed-effect weights, tanh-equivalent ψ).
    pub fixed_effect: bool,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self {
            backtransform: None,
            bootstrap_reps: BootstrapSpec::DEFAULT_REPS,
            seed: crate::DEFAULT_SEED,
            quadrature: QuadratureSpec::default(),
            clamp_bound: DEFAULT_CLAMP,
            bias_correction: false,
            fixed_effect: false,
        }
    }
}

/// Shared pooling state for one dataset; builds any interval on demand.
///
/// The three wild-bootstrap variants reuse a single multiplier stream: the
/// γ = 1 variance is computed once and scaled by γ.
#[derive(Debug)]
pub struct MetaFit {
    studies: Vec<StudySummary>,
    zstudies: Vec<ZStudy>,
    pooled: PooledZ,
    options: CiOptions,
    unit_bootstrap: OnceCell<f64>,
}

impl MetaFit {
    pub fn new(studies: &[StudySummary], options: CiOptions) -> Result<Self> {
        if studies.is_empty() {
            return Err(Error::TooFewStudies {
                method: "meta-analysis",
                k: 0,
                min: 1,
            });
        }
        let studies: Vec<StudySummary> = if options.bias_correction {
            studies
                .iter()
                .map(|s| {
                    Ok(StudySummary {
                        r: bias_corrected_r(s.r, s.n)?,
                        n: s.n,
                    })
                })
                .collect::<Result<_>>()?
        } else {
            studies.to_vec()
        };
        let zstudies = to_z_scale_clamped(&studies, options.clamp_bound)?;
        let tau2 = if options.fixed_effect || zstudies.len() < 2 {
            0.0
        } else {
            sj_tau2(&zstudies)?
        };
        let pooled = iv_pooled(&zstudies, tau2)?;
        Ok(Self {
            studies,
            zstudies,
            pooled,
            options,
            unit_bootstrap: OnceCell::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.studies.len()
    }

    pub fn n_total(&self) -> usize {
        self.studies.iter().map(|s| s.n).sum()
    }

    pub fn tau2(&self) -> f64 {
        self.pooled.tau2
    }

    pub fn pooled(&self) -> &PooledZ {
        &self.pooled
    }

    pub fn zstudies(&self) -> &[ZStudy] {
        &self.zstudies
    }

    pub fn studies(&self) -> &[StudySummary] {
        &self.studies
    }

    /// Variance of z̄ (or of r_HS) that `method` uses.
    pub fn variance(&self, method: CiMethod) -> Result<f64> {
        method.check_k(self.k())?;
        match method {
            CiMethod::Hs => {
                let r_hs = hs_pooled_r(&self.studies)?;
                hs_variance(&self.studies, r_hs.get())
            }
            CiMethod::Hovz => Ok(naive_z_variance(&self.pooled)),
            CiMethod::Kh => kh_variance(&self.zstudies, &self.pooled),
            CiMethod::Hc3 => hc_variance(&self.zstudies, &self.pooled, HcVariant::Hc3),
            CiMethod::Hc4 => hc_variance(&self.zstudies, &self.pooled, HcVariant::Hc4),
            CiMethod::Wbs1 | CiMethod::Wbs2 | CiMethod::Wbs3 => {
                let gamma = method.gamma_mode().expect("bootstrap method").gamma(self.k())?;
                Ok(gamma * self.unit_bootstrap_variance()?)
            }
        }
    }

    fn unit_bootstrap_variance(&self) -> Result<f64> {
        if let Some(v) = self.unit_bootstrap.get() {
            return Ok(*v);
        }
        let spec = BootstrapSpec::new(self.options.bootstrap_reps, GammaMode::One, self.options.seed)?;
        let v = wild_bootstrap_variance(&self.zstudies, &self.pooled, &spec)?;
        Ok(*self.unit_bootstrap.get_or_init(|| v))
    }

    pub fn ci(&self, method: CiMethod, alpha: f64) -> Result<CiResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidProbability(alpha));
        }
        let variance = self.variance(method)?;
        let se = variance.sqrt();
        let quad = &self.options.quadrature;
        match method {
            CiMethod::Hs => {
                let center = hs_pooled_r(&self.studies)?.get();
                let interval = ZInterval {
                    center,
                    se,
                    df: None,
                    tau2_z: 0.0,
                };
                build_ci(method, interval, alpha, Backtransform::None, quad)
            }
            CiMethod::Hovz => {
                let interval = ZInterval {
                    center: self.pooled.z_bar.get(),
                    se,
                    df: None,
                    tau2_z: self.tau2(),
                };
                let bt = self.options.backtransform.unwrap_or(Backtransform::Tanh);
                build_ci(method, interval, alpha, bt, quad)
            }
            _ => {
                let interval = ZInterval {
                    center: self.pooled.z_bar.get(),
                    se,
                    df: Some(self.k() as u64 - 1),
                    tau2_z: self.tau2(),
                };
                let bt = self.options.backtransform.unwrap_or(Backtransform::Integral);
                build_ci(method, interval, alpha, bt, quad)
            }
        }
    }
}

/// One-shot interval for `studies`.
pub fn compute_ci(studies: &[StudySummary], method: CiMethod, alpha: f64, options: &CiOptions) -> Result<CiResult> {
    MetaFit::new(studies, *options)?.ci(method, alpha)
}
