//! Monte Carlo coverage harness.
//!
//! True study effects come from a truncated normal (Model 1) or a
//! transformed beta (Model 2); observed correlations are computed from raw
//! bivariate-normal samples. Each replicate owns the substream
//! `stream_rng(scenario.seed, replicate)`, so results do not depend on the
//! number of worker threads.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci_methods::{CiMethod, CiOptions, MetaFit};
use crate::error::{Error, Result};
use crate::pooling::{pooled_ipd_ci, StudySummary, MIN_STUDY_SIZE};
use crate::stats_core::{pearson_r, CorrelationValue};
use crate::streams::{derive_seed, stream_rng};

/// True effects are kept inside `[-TRUNCATION, TRUNCATION]`.
pub const TRUNCATION: f64 = 0.999;
pub const REJECTION_BUDGET: u64 = 1_000_000;
pub const DEFAULT_REPS: usize = 2000;
pub const FULL_REPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[serde(rename = "truncnorm")]
    TruncNorm,
    Beta,
    LognormalK1,
    NormalK1,
}

impl Model {
    pub fn tag(self) -> &'static str {
        match self {
            Model::TruncNorm => "truncnorm",
            Model::Beta => "beta",
            Model::LognormalK1 => "lognormal_k1",
            Model::NormalK1 => "normal_k1",
        }
    }

    pub fn is_single_study(self) -> bool {
        matches!(self, Model::LognormalK1 | Model::NormalK1)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truncnorm" | "normal" => Ok(Model::TruncNorm),
            "beta" => Ok(Model::Beta),
            "lognormal_k1" => Ok(Model::LognormalK1),
            "normal_k1" => Ok(Model::NormalK1),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

/// How an observed correlation is produced from a study's true effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WithinStudy {
    /// Pearson r of `n` bivariate-normal pairs.
    #[default]
    Raw,
    /// `tanh` of `N(atanh ρᵢ, 1/(n - 3))`.
    FisherZ,
}

impl FromStr for WithinStudy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(WithinStudy::Raw),
            "fisherz" | "fisher-z" | "z" => Ok(WithinStudy::FisherZ),
            other => Err(Error::InvalidParameter(format!("unknown within-study mode `{other}`"))),
        }
    }
}

/// Dependence construction for the standardized-lognormal pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LognormalCoupling {
    /// `Y = ρX + √(1-ρ²)E` with X, E independent standardized lognormals.
    #[default]
    LinearMix,
    /// Lognormal marginals on a normal pair with correlation `ln(1 + ρ(e - 1))`.
    Copula,
}

impl FromStr for LognormalCoupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linearmix" | "linear-mix" | "mix" => Ok(LognormalCoupling::LinearMix),
            "copula" => Ok(LognormalCoupling::Copula),
            other => Err(Error::InvalidParameter(format!("unknown lognormal coupling `{other}`"))),
        }
    }
}

/// Shape parameters of the beta law behind Model 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    /// Mean of `2(X - 1/2)`.
    pub fn mean(&self) -> f64 {
        2.0 * self.a / (self.a + self.b) - 1.0
    }

    /// Variance of `2(X - 1/2)`.
    pub fn variance(&self) -> f64 {
        let s = self.a + self.b;
        4.0 * self.a * self.b / (s * s * (s + 1.0))
    }
}

/// Beta shapes for which `2(X - 1/2)` has mean `rho` and variance `tau2`.
pub fn beta_params(rho: CorrelationValue, tau2: f64) -> Result<BetaParams> {
    if !(tau2 > 0.0) || !tau2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "beta model needs tau^2 > 0, got {tau2}"
        )));
    }
    let rho = rho.get();
    let a = ((1.0 - rho) * (1.0 + rho) - tau2) / tau2 * (1.0 + rho) / 2.0;
    let b = (1.0 - rho) / (1.0 + rho) * a;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta shapes undefined for rho = {rho}, tau^2 = {tau2} (a = {a}, b = {b})"
        )));
    }
    Ok(BetaParams { a, b })
}

/// Prepared generator of true study effects.
#[derive(Debug, Clone)]
pub enum RhoSampler {
    Fixed(f64),
    TruncNorm { rho: f64, tau: f64 },
    Beta(Beta<f64>),
}

impl RhoSampler {
    pub fn new(model: Model, rho: CorrelationValue, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
        }
        if tau == 0.0 || model.is_single_study() {
            return Ok(RhoSampler::Fixed(rho.get()));
        }
        match model {
            Model::TruncNorm => Ok(RhoSampler::TruncNorm { rho: rho.get(), tau }),
            Model::Beta => {
                let p = beta_params(rho, tau * tau)?;
                let dist = Beta::new(p.a, p.b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                Ok(RhoSampler::Beta(dist))
            }
            Model::LognormalK1 | Model::NormalK1 => unreachable!(),
        }
    }

    /// Rejection-samples until the draw lands in `[-0.999, 0.999]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CorrelationValue> {
        for _ in 0..REJECTION_BUDGET {
            let x = match self {
                RhoSampler::Fixed(rho) => return Ok(CorrelationValue(*rho)),
                RhoSampler::TruncNorm { rho, tau } => {
                    let e: f64 = StandardNormal.sample(rng);
                    rho + tau * e
                }
                RhoSampler::Beta(dist) => 2.0 * (dist.sample(rng) - 0.5),
            };
            if (-TRUNCATION..=TRUNCATION).contains(&x) {
                return Ok(CorrelationValue(x));
            }
        }
        Err(Error::RejectionBudget(REJECTION_BUDGET))
    }
}

/// One true effect under `model`. Prefer [`RhoSampler`] in loops.
pub fn draw_true_rho<R: Rng + ?Sized>(
    model: Model,
    rho: CorrelationValue,
    tau: f64,
    rng: &mut R,
) -> Result<CorrelationValue> {
    RhoSampler::new(model, rho, tau)?.sample(rng)
}

fn check_study_size(n: usize) -> Result<()> {
    if n < MIN_STUDY_SIZE {
        return Err(Error::SampleTooSmall { n, min: MIN_STUDY_SIZE });
    }
    Ok(())
}

fn normal_pairs<R: Rng + ?Sized>(rho: f64, n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let s = (1.0 - rho * rho).sqrt();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        xs.push(x);
        ys.push(rho * x + s * e);
    }
    (xs, ys)
}

/// Observed correlation of one study of size `n` with true effect `rho_i`.
pub fn draw_study_r<R: Rng + ?Sized>(
    rho_i: CorrelationValue,
    n: usize,
    within: WithinStudy,
    rng: &mut R,
) -> Result<StudySummary> {
    check_study_size(n)?;
    if rho_i.get().abs() > TRUNCATION {
        return Err(Error::CorrelationOutOfRange(rho_i.get()));
    }
    let r = match within {
        WithinStudy::Raw => {
            let (xs, ys) = normal_pairs(rho_i.get(), n, rng);
            pearson_r(&xs, &ys)?
        }
        WithinStudy::FisherZ => {
            let e: f64 = StandardNormal.sample(rng);
            let z = rho_i.get().atanh() + e / (n as f64 - 3.0).sqrt();
            CorrelationValue(z.tanh())
        }
    };
    Ok(StudySummary { r, n })
}

fn standardized_lognormal(z: f64) -> f64 {
    let e = std::f64::consts::E;
    (z.exp() - 0.5f64.exp()) / (e * e - e).sqrt()
}

/// `n` raw pairs for the single-study experiment.
pub fn draw_k1_pair_sample<R: Rng + ?Sized>(
    model: Model,
    rho: CorrelationValue,
    n: usize,
    coupling: LognormalCoupling,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_study_size(n)?;
    let rho = rho.get();
    match model {
        Model::NormalK1 => Ok(normal_pairs(rho, n, rng)),
        Model::LognormalK1 => {
            let e = std::f64::consts::E;
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            match coupling {
                LognormalCoupling::LinearMix => {
                    let s = (1.0 - rho * rho).sqrt();
                    for _ in 0..n {
                        let x = standardized_lognormal(StandardNormal.sample(rng));
                        let noise = standardized_lognormal(StandardNormal.sample(rng));
                        xs.push(x);
                        ys.push(rho * x + s * noise);
                    }
                }
                LognormalCoupling::Copula => {
                    if rho <= -1.0 / (e - 1.0) {
                        return Err(Error::InvalidParameter(format!(
                            "lognormal copula cannot reach correlation {rho}"
                        )));
                    }
                    let rho_n = (1.0 + rho * (e - 1.0)).ln();
                    let (z1, z2) = normal_pairs(rho_n.min(1.0), n, rng);
                    xs.extend(z1.into_iter().map(standardized_lognormal));
                    ys.extend(z2.into_iter().map(standardized_lognormal));
                }
            }
            Ok((xs, ys))
        }
        Model::TruncNorm | Model::Beta => Err(Error::InvalidParameter(format!("{model} is not a single-study model"))),
    }
}

/// Monte Carlo standard error of a coverage proportion.
pub fn mc_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// One simulation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub model: Model,
    pub rho: f64,
    pub tau: f64,
    pub n_vector: Vec<usize>,
    pub n_pattern: String,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<CiMethod>,
    pub within: WithinStudy,
    pub coupling: LognormalCoupling,
    /// Bootstrap replicates, back-transform and clamp; the seed field is ignored.
    pub options: CiOptions,
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.n_vector.len()
    }

    pub fn validate(&self) -> Result<()> {
        CorrelationValue::new(self.rho)?;
        if self.rho.abs() > TRUNCATION {
            return Err(Error::CorrelationOutOfRange(self.rho));
        }
        if self.n_vector.is_empty() {
            return Err(Error::InvalidParameter(format!("scenario {} has no studies", self.id)));
        }
        for &n in &self.n_vector {
            check_study_size(n)?;
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidProbability(self.alpha));
        }
        if self.model.is_single_study() {
            if self.k() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "{} needs exactly one study, got {}",
                    self.model,
                    self.k()
                )));
            }
            return Ok(());
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods requested".into()));
        }
        for m in &self.methods {
            if self.k() < m.min_studies() {
                return Err(Error::TooFewStudies {
                    method: m.tag(),
                    k: self.k(),
                    min: m.min_studies(),
                });
            }
        }
        RhoSampler::new(self.model, CorrelationValue(self.rho), self.tau)?;
        Ok(())
    }

    /// Interval labels reported for this scenario, in output order.
    pub fn interval_kinds(&self) -> Vec<IntervalKind> {
        if self.model.is_single_study() {
            vec![IntervalKind::Asymptotic]
        } else {
            self.methods.iter().copied().map(IntervalKind::Meta).collect()
        }
    }
}

/// What produced an interval: a meta-analytic method, or the pooled-data
/// asymptotic interval used for single studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntervalKind {
    Meta(CiMethod),
    Asymptotic,
}

impl fmt::Display for IntervalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalKind::Meta(m) => m.fmt(f),
            IntervalKind::Asymptotic => f.write_str("ASYMPTOTIC"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub kind: IntervalKind,
    pub coverage: f64,
    pub mean_length: f64,
    pub failures: usize,
    pub successes: usize,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub model: Model,
    pub rho: f64,
    pub tau: f64,
    pub k: usize,
    pub n_pattern: String,
    pub reps: usize,
    pub methods: Vec<MethodSummary>,
}

impl ScenarioResult {
    pub fn get(&self, method: CiMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.kind == IntervalKind::Meta(method))
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        self.methods
            .iter()
            .map(|m| ResultRow {
                scenario_id: self.scenario_id.clone(),
                model: self.model.tag().to_string(),
                rho: self.rho,
                tau: self.tau,
                k: self.k,
                n_pattern: self.n_pattern.clone(),
                method: m.kind.to_string(),
                coverage: m.coverage,
                mean_length: m.mean_length,
                failures: m.failures,
                mc_se: m.mc_se,
            })
            .collect()
    }
}

/// Flat output record, one per (scenario, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_id: String,
    pub model: String,
    pub rho: f64,
    pub tau: f64,
    pub k: usize,
    pub n_pattern: String,
    pub method: String,
    pub coverage: f64,
    pub mean_length: f64,
    pub failures: usize,
    pub mc_se: f64,
}

/// `Some((covers, length))` per reported interval, `None` for a failure.
pub type ReplicateOutcome = Vec<Option<(bool, f64)>>;

fn run_replicate(s: &Scenario, sampler: &RhoSampler, rep: usize) -> ReplicateOutcome {
    let mut rng = stream_rng(s.seed, rep as u64);
    if s.model.is_single_study() {
        let outcome = single_study_replicate(s, &mut rng).ok();
        return vec![outcome];
    }
    let studies: Result<Vec<StudySummary>> = s
        .n_vector
        .iter()
        .map(|&n| {
            let rho_i = sampler.sample(&mut rng)?;
            draw_study_r(rho_i, n, s.within, &mut rng)
        })
        .collect();
    let options = CiOptions {
        seed: derive_seed(s.seed, rep as u64),
        ..s.options
    };
    let fit = match studies.and_then(|st| MetaFit::new(&st, options)) {
        Ok(fit) => fit,
        Err(_) => return vec![None; s.methods.len()],
    };
    s.methods
        .iter()
        .map(|&m| {
            fit.ci(m, s.alpha)
                .ok()
                .filter(|ci| ci.lower_r.is_finite() && ci.upper_r.is_finite())
                .map(|ci| (ci.covers(s.rho), ci.length()))
        })
        .collect()
}

fn single_study_replicate<R: Rng + ?Sized>(s: &Scenario, rng: &mut R) -> Result<(bool, f64)> {
    let n = s.n_vector[0];
    let (xs, ys) = draw_k1_pair_sample(s.model, CorrelationValue(s.rho), n, s.coupling, rng)?;
    let r = pearson_r(&xs, &ys)?;
    let (lo, hi) = pooled_ipd_ci(r, n, s.alpha)?;
    Ok((lo <= s.rho && s.rho <= hi, hi - lo))
}

/// Per-replicate outcomes in replicate order, one entry per
/// [`Scenario::interval_kinds`] label.
pub fn run_replicates(s: &Scenario) -> Result<Vec<ReplicateOutcome>> {
    s.validate()?;
    let sampler = RhoSampler::new(s.model, CorrelationValue(s.rho), s.tau)?;
    Ok((0..s.reps)
        .into_par_iter()
        .map(|rep| run_replicate(s, &sampler, rep))
        .collect())
}

/// Runs every replicate of `s` on the current rayon pool.
///
/// Replicates are reduced in index order, so the result is bit-identical
/// for any number of threads.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioResult> {
    let outcomes = run_replicates(s)?;

    let kinds = s.interval_kinds();
    let mut methods = Vec::with_capacity(kinds.len());
    for (j, kind) in kinds.into_iter().enumerate() {
        let mut hits = 0usize;
        let mut ok = 0usize;
        let mut length = 0.0;
        for outcome in &outcomes {
            if let Some((covers, len)) = outcome[j] {
                ok += 1;
                hits += covers as usize;
                length += len;
            }
        }
        let (coverage, mean_length) = if ok == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (hits as f64 / ok as f64, length / ok as f64)
        };
        methods.push(MethodSummary {
            kind,
            coverage,
            mean_length,
            failures: s.reps - ok,
            successes: ok,
            mc_se: if ok == 0 { f64::NAN } else { mc_se(coverage, ok) },
        });
    }
    Ok(ScenarioResult {
        scenario_id: s.id.clone(),
        model: s.model,
        rho: s.rho,
        tau: s.tau,
        k: s.k(),
        n_pattern: s.n_pattern.clone(),
        reps: s.reps,
        methods,
    })
}

/// Study sizes of the small base setting (mean 20).
pub const BASE_SIZES: [usize; 5] = [15, 16, 19, 23, 27];
/// Five heterogeneous sizes, one large pair among small studies.
pub const SPECIAL_SIZES_K5: [usize; 5] = [23, 19, 250, 330, 29];
/// Ten large studies; tiled twice for K = 20 (mean 300).
pub const SPECIAL_SIZES_K10: [usize; 10] = [210, 240, 350, 220, 290, 280, 340, 400, 380, 290];
pub const GRID_RHOS: [f64; 8] = [0.0, 0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const GRID_TAUS: [f64; 3] = [0.0, 0.16, 0.4];

/// The ten (pattern, sizes) settings of the full grid.
pub fn size_settings() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::with_capacity(10);
    for k in [5, 10, 20, 40] {
        let base: Vec<usize> = BASE_SIZES.iter().copied().cycle().take(k).collect();
        let large = base.iter().map(|n| 4 * n).collect();
        out.push((format!("small-k{k}"), base));
        out.push((format!("large-k{k}"), large));
    }
    out.push(("mixed-k5".to_string(), SPECIAL_SIZES_K5.to_vec()));
    out.push((
        "big-k20".to_string(),
        SPECIAL_SIZES_K10.iter().chain(&SPECIAL_SIZES_K10).copied().collect(),
    ));
    out
}

fn tag_number(x: f64) -> String {
    let s = format!("{x}");
    s.trim_end_matches(".0").to_string()
}

fn scenario_id(model: Model, rho: f64, tau: f64, pattern: &str) -> String {
    format!(
        "{}_rho{}_tau{}_{}",
        model.tag(),
        tag_number(rho),
        tag_number(tau),
        pattern
    )
}

/// The full 480-cell grid: 2 models × 3 τ × 8 ρ × 10 size settings.
///
/// Cell seeds depend on (τ, ρ, setting) but not on the model, so the two
/// models share a seed schedule.
pub fn default_grid() -> Vec<Scenario> {
    default_grid_seeded(crate::DEFAULT_SEED, DEFAULT_REPS)
}

pub fn default_grid_seeded(base_seed: u64, reps: usize) -> Vec<Scenario> {
    let settings = size_settings();
    let mut grid = Vec::with_capacity(480);
    for model in [Model::TruncNorm, Model::Beta] {
        let mut cell = 0u64;
        for &tau in &GRID_TAUS {
            for &rho in &GRID_RHOS {
                for (pattern, sizes) in &settings {
                    grid.push(Scenario {
                        id: scenario_id(model, rho, tau, pattern),
                        model,
                        rho,
                        tau,
                        n_vector: sizes.clone(),
                        n_pattern: pattern.clone(),
                        reps,
                        alpha: 0.05,
                        seed: derive_seed(base_seed, cell),
                        methods: CiMethod::ALL.to_vec(),
                        within: WithinStudy::Raw,
                        coupling: LognormalCoupling::LinearMix,
                        options: CiOptions::default(),
                    });
                    cell += 1;
                }
            }
        }
    }
    grid
}

/// The twelve single-study cells: {normal, lognormal} × ρ ∈ {0.3, 0.7} × n ∈ {20, 50, 100}.
pub fn single_study_grid(base_seed: u64, reps: usize) -> Vec<Scenario> {
    let mut grid = Vec::with_capacity(12);
    let mut cell = 0u64;
    for model in [Model::NormalK1, Model::LognormalK1] {
        for rho in [0.3, 0.7] {
            for n in [20usize, 50, 100] {
                let pattern = format!("n{n}");
                grid.push(Scenario {
                    id: scenario_id(model, rho, 0.0, &pattern),
                    model,
                    rho,
                    tau: 0.0,
                    n_vector: vec![n],
                    n_pattern: pattern,
                    reps,
                    alpha: 0.05,
                    seed: derive_seed(base_seed, 10_000 + cell),
                    methods: Vec::new(),
                    within: WithinStudy::Raw,
                    coupling: LognormalCoupling::LinearMix,
                    options: CiOptions::default(),
                });
                cell += 1;
            }
        }
    }
    grid
}

/// Cells mimicking a real meta-analysis: given sizes, pooled effect and
/// heterogeneity, under both effect models with a shared seed.
pub fn replica_grid(label: &str, sizes: &[usize], rho: f64, tau2: f64, base_seed: u64, reps: usize) -> Vec<Scenario> {
    let tau = tau2.max(0.0).sqrt();
    [Model::TruncNorm, Model::Beta]
        .into_iter()
        .map(|model| Scenario {
            id: scenario_id(model, rho, tau, label),
            model,
            rho,
            tau,
            n_vector: sizes.to_vec(),
            n_pattern: label.to_string(),
            reps,
            alpha: 0.05,
            seed: derive_seed(base_seed, 20_000),
            methods: CiMethod::ALL.to_vec(),
            within: WithinStudy::Raw,
            coupling: LognormalCoupling::LinearMix,
            options: CiOptions::default(),
        })
        .collect()
}

/// CSV form of a scenario; sizes are `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub id: String,
    pub model: Model,
    pub rho: f64,
    pub tau: f64,
    pub n_vector: String,
    #[serde(default)]
    pub n_pattern: Option<String>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl From<&Scenario> for GridRow {
    fn from(s: &Scenario) -> Self {
        GridRow {
            id: s.id.clone(),
            model: s.model,
            rho: s.rho,
            tau: s.tau,
            n_vector: s.n_vector.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
            n_pattern: Some(s.n_pattern.clone()),
            reps: Some(s.reps),
            alpha: Some(s.alpha),
            seed: Some(s.seed),
        }
    }
}

/// Values used for columns a grid file leaves blank.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDefaults {
    pub reps: usize,
    pub alpha: f64,
    pub base_seed: u64,
    pub methods: Vec<CiMethod>,
    pub within: WithinStudy,
    pub coupling: LognormalCoupling,
    pub options: CiOptions,
}

impl Default for GridDefaults {
    fn default() -> Self {
        Self {
            reps: DEFAULT_REPS,
            alpha: 0.05,
            base_seed: crate::DEFAULT_SEED,
            methods: CiMethod::ALL.to_vec(),
            within: WithinStudy::Raw,
            coupling: LognormalCoupling::LinearMix,
            options: CiOptions::default(),
        }
    }
}

pub fn write_grid<W: Write>(writer: W, scenarios: &[Scenario]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in scenarios {
        w.serialize(GridRow::from(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid<R: Read>(reader: R, defaults: &GridDefaults) -> Result<Vec<Scenario>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<GridRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Row {
            row: line,
            message: e.to_string(),
        })?;
        let n_vector = row
            .n_vector
            .split(';')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Row {
                row: line,
                message: format!("bad n_vector `{}`: {e}", row.n_vector),
            })?;
        let scenario = Scenario {
            n_pattern: row.n_pattern.unwrap_or_else(|| format!("k{}", n_vector.len())),
            n_vector,
            id: row.id,
            model: row.model,
            rho: row.rho,
            tau: row.tau,
            reps: row.reps.unwrap_or(defaults.reps),
            alpha: row.alpha.unwrap_or(defaults.alpha),
            seed: row.seed.unwrap_or_else(|| derive_seed(defaults.base_seed, i as u64)),
            methods: defaults.methods.clone(),
            within: defaults.within,
            coupling: defaults.coupling,
            options: defaults.options,
        };
        scenario.validate().map_err(|e| Error::Row {
            row: line,
            message: e.to_string(),
        })?;
        out.push(scenario);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter("grid file has no scenarios".into()));
    }
    Ok(out)
}

/// Coverage and length averaged over cells sharing (model, τ, ρ, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub model: String,
    pub rho: f64,
    pub tau: f64,
    pub method: String,
    pub cells: usize,
    pub coverage: f64,
    pub mean_length: f64,
}

/// Unweighted mean over size settings, in first-seen order.
pub fn aggregate(results: &[ScenarioResult]) -> Vec<AggregateRow> {
    let mut index: HashMap<(Model, u64, u64, String), usize> = HashMap::new();
    let mut sums: Vec<(AggregateRow, f64, f64)> = Vec::new();
    for res in results {
        for m in &res.methods {
            if !m.coverage.is_finite() {
                continue;
            }
            let key = (res.model, res.tau.to_bits(), res.rho.to_bits(), m.kind.to_string());
            let slot = *index.entry(key).or_insert_with(|| {
                sums.push((
                    AggregateRow {
                        model: res.model.tag().to_string(),
                        rho: res.rho,
                        tau: res.tau,
                        method: m.kind.to_string(),
                        cells: 0,
                        coverage: 0.0,
                        mean_length: 0.0,
                    },
                    0.0,
                    0.0,
                ));
                sums.len() - 1
            });
            let entry = &mut sums[slot];
            entry.0.cells += 1;
            entry.1 += m.coverage;
            entry.2 += m.mean_length;
        }
    }
    sums.into_iter()
        .map(|(mut row, cov, len)| {
            row.coverage = cov / row.cells as f64;
            row.mean_length = len / row.cells as f64;
            row
        })
        .collect()
}
