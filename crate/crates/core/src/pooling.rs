//! Study summaries, the z-scale representation, Sidik-Jonkman heterogeneity
//! and the pooled point estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats_core::{clamp_r, fisher_z, normal_quantile, CorrelationValue, ZValue, DEFAULT_CLAMP};

/// Smallest study size for which `1/(n - 3)` is a usable variance.
pub const MIN_STUDY_SIZE: usize = 4;

/// One primary study: observed correlation and number of subjects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub r: CorrelationValue,
    pub n: usize,
}

impl StudySummary {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if n < MIN_STUDY_SIZE {
            return Err(Error::SampleTooSmall { n, min: MIN_STUDY_SIZE });
        }
        Ok(Self {
            r: CorrelationValue::new(r)?,
            n,
        })
    }
}

/// A study on the Fisher-z scale with its approximate sampling variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZStudy {
    pub z: ZValue,
    pub var_z: f64,
    pub n: usize,
}

/// Inverse-variance pooled z with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledZ {
    pub z_bar: ZValue,
    pub weights: Vec<f64>,
    pub tau2: f64,
    pub k: usize,
}

impl PooledZ {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// atanh of each clamped correlation, with variance `1/(n - 3)`.
pub fn to_z_scale(studies: &[StudySummary]) -> Result<Vec<ZStudy>> {
    to_z_scale_clamped(studies, DEFAULT_CLAMP)
}

pub fn to_z_scale_clamped(studies: &[StudySummary], bound: f64) -> Result<Vec<ZStudy>> {
    studies
        .iter()
        .map(|s| {
            if s.n < MIN_STUDY_SIZE {
                return Err(Error::SampleTooSmall {
                    n: s.n,
                    min: MIN_STUDY_SIZE,
                });
            }
            Ok(ZStudy {
                z: fisher_z(clamp_r(s.r.get(), bound))?,
                var_z: 1.0 / (s.n as f64 - 3.0),
                n: s.n,
            })
        })
        .collect()
}

/// Sidik-Jonkman two-step estimate of the between-study variance on the z-scale.
///
/// Starts from the crude dispersion `τ₀² = (1/K) Σ (zᵢ - z̄)²` and refines it
/// with weights `qᵢ = τ₀² / (vᵢ + τ₀²)`:
/// `τ² = (1/(K-1)) Σ qᵢ (zᵢ - μ̂)²` where `μ̂` is the `q`-weighted mean.
pub fn sj_tau2(zstudies: &[ZStudy]) -> Result<f64> {
    let k = zstudies.len();
    if k < 2 {
        return Err(Error::TooFewStudies {
            method: "Sidik-Jonkman",
            k,
            min: 2,
        });
    }
    let kf = k as f64;
    let first = zstudies[0].z.get();
    if zstudies.iter().all(|s| s.z.get() == first) {
        return Ok(0.0);
    }
    let mean = zstudies.iter().map(|s| s.z.get()).sum::<f64>() / kf;
    let tau2_0 = zstudies.iter().map(|s| (s.z.get() - mean).powi(2)).sum::<f64>() / kf;
    if tau2_0 == 0.0 {
        return Ok(0.0);
    }
    let q: Vec<f64> = zstudies.iter().map(|s| tau2_0 / (s.var_z + tau2_0)).collect();
    let q_sum: f64 = q.iter().sum();
    let mu = zstudies.iter().zip(&q).map(|(s, w)| w * s.z.get()).sum::<f64>() / q_sum;
    let ss: f64 = zstudies.iter().zip(&q).map(|(s, w)| w * (s.z.get() - mu).powi(2)).sum();
    Ok(ss / (kf - 1.0))
}

/// Weighted mean of z with weights `(vᵢ + τ²)⁻¹`.
pub fn iv_pooled(zstudies: &[ZStudy], tau2: f64) -> Result<PooledZ> {
    if zstudies.is_empty() {
        return Err(Error::TooFewStudies {
            method: "inverse-variance pooling",
            k: 0,
            min: 1,
        });
    }
    if !(tau2 >= 0.0) {
        return Err(Error::NegativeVariance(tau2));
    }
    let weights: Vec<f64> = zstudies.iter().map(|s| 1.0 / (s.var_z + tau2)).collect();
    let total: f64 = weights.iter().sum();
    let z_bar = zstudies.iter().zip(&weights).map(|(s, w)| w * s.z.get()).sum::<f64>() / total;
    Ok(PooledZ {
        z_bar: ZValue::new(z_bar)?,
        k: weights.len(),
        weights,
        tau2,
    })
}

/// Hunter-Schmidt sample-size-weighted mean correlation.
pub fn hs_pooled_r(studies: &[StudySummary]) -> Result<CorrelationValue> {
    if studies.is_empty() {
        return Err(Error::TooFewStudies {
            method: "Hunter-Schmidt",
            k: 0,
            min: 1,
        });
    }
    let n_total: f64 = studies.iter().map(|s| s.n as f64).sum();
    let weighted: f64 = studies.iter().map(|s| s.n as f64 * s.r.get()).sum();
    CorrelationValue::new((weighted / n_total).clamp(-1.0, 1.0))
}

/// `r ± u₁₋α/₂ (1 - r²)/√N`, clipped to `[-1, 1]`.
pub fn pooled_ipd_ci(r_pool: CorrelationValue, n_total: usize, alpha: f64) -> Result<(f64, f64)> {
    if n_total < MIN_STUDY_SIZE {
        return Err(Error::SampleTooSmall {
            n: n_total,
            min: MIN_STUDY_SIZE,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidProbability(alpha));
    }
    let q = normal_quantile(1.0 - alpha / 2.0)?;
    let r = r_pool.get();
    let half = q * (1.0 - r * r) / (n_total as f64).sqrt();
    Ok(((r - half).max(-1.0), (r + half).min(1.0)))
}

/// Point estimates pooled directly on the correlation scale.
///
/// Each study gets the large-sample variance `(1 - rᵢ²)² / (nᵢ - 1)`
/// (rᵢ clamped to ±0.999). `tau2` is the Sidik-Jonkman estimate computed on
/// that scale, and `r_random` the corresponding random-effects mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RScaleSummary {
    pub r_fixed: f64,
    pub r_random: f64,
    pub tau2: f64,
}

pub fn r_scale_summary(studies: &[StudySummary]) -> Result<RScaleSummary> {
    let k = studies.len();
    if k < 2 {
        return Err(Error::TooFewStudies {
            method: "r-scale summary",
            k,
            min: 2,
        });
    }
    let rs: Vec<f64> = studies
        .iter()
        .map(|s| clamp_r(s.r.get(), DEFAULT_CLAMP).get())
        .collect();
    let vars: Vec<f64> = studies
        .iter()
        .zip(&rs)
        .map(|(s, r)| (1.0 - r * r).powi(2) / (s.n as f64 - 1.0))
        .collect();
    let weighted_mean = |w: &[f64]| {
        let total: f64 = w.iter().sum();
        w.iter().zip(&rs).map(|(w, r)| w * r).sum::<f64>() / total
    };

    let fixed_w: Vec<f64> = vars.iter().map(|v| 1.0 / v).collect();
    let r_fixed = weighted_mean(&fixed_w);

    let kf = k as f64;
    let mean = rs.iter().sum::<f64>() / kf;
    let tau2_0 = rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / kf;
    let tau2 = if tau2_0 == 0.0 {
        0.0
    } else {
        let q: Vec<f64> = vars.iter().map(|v| tau2_0 / (v + tau2_0)).collect();
        let mu = weighted_mean(&q);
        q.iter().zip(&rs).map(|(w, r)| w * (r - mu).powi(2)).sum::<f64>() / (kf - 1.0)
    };
    let random_w: Vec<f64> = vars.iter().map(|v| 1.0 / (v + tau2)).collect();
    Ok(RScaleSummary {
        r_fixed,
        r_random: weighted_mean(&random_w),
        tau2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zs(z: &[f64], var: &[f64]) -> Vec<ZStudy> {
        z.iter()
            .zip(var)
            .map(|(&z, &v)| ZStudy {
                z: ZValue(z),
                var_z: v,
                n: (1.0 / v + 3.0).round() as usize,
            })
            .collect()
    }

    fn studies(rn: &[(f64, usize)]) -> Vec<StudySummary> {
        rn.iter().map(|&(r, n)| StudySummary::new(r, n).unwrap()).collect()
    }

    #[test]
    fn z_scale_examples() {
        let out = to_z_scale(&studies(&[(0.0, 23), (0.5, 103), (1.0, 12)])).unwrap();
        assert_eq!(out[0].z.get(), 0.0);
        assert_eq!(out[0].var_z, 0.05);
        assert!((out[1].z.get() - 0.549_306_144_334_054_8).abs() < 1e-15);
        assert_eq!(out[1].var_z, 0.01);
        assert!((out[2].z.get() - 0.999f64.atanh()).abs() < 1e-15);
        assert!((out[2].z.get() - 3.800_201).abs() < 1e-6);
        assert!((out[2].var_z - 1.0 / 9.0).abs() < 1e-16);
    }

    #[test]
    fn small_studies_rejected() {
        assert!(StudySummary::new(0.2, 3).is_err());
        let bad = [StudySummary {
            r: CorrelationValue(0.1),
            n: 3,
        }];
        assert!(to_z_scale(&bad).is_err());
    }

    #[test]
    fn sj_zero_dispersion() {
        assert_eq!(sj_tau2(&zs(&[0.4, 0.4, 0.4], &[0.1, 0.2, 0.05])).unwrap(), 0.0);
    }

    #[test]
    fn sj_three_study_hand_value() {
        // τ₀² = 1/6, q = (1/6)/(0.1 + 1/6) = 0.625, μ̂ = 0.5,
        // τ² = (1/2) · 0.625 · (0.25 + 0 + 0.25) = 0.15625
        let t = sj_tau2(&zs(&[0.0, 0.5, 1.0], &[0.1, 0.1, 0.1])).unwrap();
        assert!((t - 0.156_25).abs() < 1e-15);
    }

    #[test]
    fn sj_two_study_hand_value() {
        // τ₀² = 0.25, q = 0.25/0.35, μ̂ = 0.5, τ² = q · 0.5
        let t = sj_tau2(&zs(&[0.0, 1.0], &[0.1, 0.1])).unwrap();
        assert!((t - 0.25 / 0.35 * 0.5).abs() < 1e-15);
        assert!(sj_tau2(&zs(&[0.0], &[0.1])).is_err());
    }

    #[test]
    fn iv_pooled_examples() {
        let single = iv_pooled(&zs(&[0.37], &[0.02]), 0.1).unwrap();
        assert!((single.z_bar.get() - 0.37).abs() < 1e-15);

        let equal = iv_pooled(&zs(&[0.1, 0.2, 0.6], &[0.05, 0.05, 0.05]), 0.0).unwrap();
        assert!((equal.z_bar.get() - 0.3).abs() < 1e-15);

        let p = iv_pooled(&zs(&[0.2, 0.4], &[0.01, 0.02]), 0.0).unwrap();
        assert!((p.z_bar.get() - (100.0 * 0.2 + 50.0 * 0.4) / 150.0).abs() < 1e-15);
        assert!((p.total_weight() - 150.0).abs() < 1e-12);

        assert!(iv_pooled(&[], 0.0).is_err());
        assert!(iv_pooled(&zs(&[0.1], &[0.1]), -0.1).is_err());
    }

    #[test]
    fn hs_pooled_examples() {
        let eq = hs_pooled_r(&studies(&[(0.1, 50), (0.3, 50)])).unwrap();
        assert!((eq.get() - 0.2).abs() < 1e-15);
        let r = hs_pooled_r(&studies(&[(0.1, 100), (0.5, 300)])).unwrap();
        assert!((r.get() - 0.4).abs() < 1e-15);
        assert!(hs_pooled_r(&[]).is_err());
    }

    #[test]
    fn ipd_ci_examples() {
        let (lo, hi) = pooled_ipd_ci(CorrelationValue(0.0), 100, 0.05).unwrap();
        assert!((hi - 0.195_996_398_454_005_4).abs() < 1e-9);
        assert!((lo + hi).abs() < 1e-15);
        let (lo, hi) = pooled_ipd_ci(CorrelationValue(1.0), 40, 0.05).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
        assert!(pooled_ipd_ci(CorrelationValue(0.2), 100, 0.0).is_err());
        assert!(pooled_ipd_ci(CorrelationValue(0.2), 100, 1.0).is_err());
    }
}
