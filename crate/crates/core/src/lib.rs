//! Confidence intervals for pooled Pearson correlations.
//!
//! The z-based methods (HOVz, Knapp-Hartung, wild bootstrap, HC3/HC4) pool
//! Fisher-z values with Sidik-Jonkman random-effects weights; Hunter-Schmidt
//! pools raw correlations. [`simulation`] measures their coverage by Monte
//! Carlo.
//!
//! ```
//! use corrmeta::{builtin, CiMethod, CiOptions, MetaFit};
//!
//! let data = builtin("molloy2014").unwrap();
//! let fit = MetaFit::new(&data.studies(), CiOptions::default()).unwrap();
//! let ci = fit.ci(CiMethod::Kh, 0.05).unwrap();
//! assert!(ci.lower_r < ci.point_r && ci.point_r < ci.upper_r);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ci_methods;
pub mod datasets;
pub mod error;
pub mod pooling;
pub mod simulation;
pub mod stats_core;
pub mod streams;

/// Seed used whenever the caller does not pick one.
pub const DEFAULT_SEED: u64 = 20_210_916;

pub use ci_methods::{
    build_ci, compute_ci, hc_variance, hs_variance, kh_variance, naive_z_variance, wild_bootstrap_variance,
    Backtransform, BootstrapSpec, CiMethod, CiOptions, CiResult, GammaMode, HcVariant, MetaFit, ZInterval,
};
pub use datasets::{builtin, builtin_names, load_csv, parse_csv, Dataset, DatasetRecord};
pub use error::{Error, Result};
pub use pooling::{
    hs_pooled_r, iv_pooled, pooled_ipd_ci, r_scale_summary, sj_tau2, to_z_scale, to_z_scale_clamped, PooledZ,
    RScaleSummary, StudySummary, ZStudy,
};
pub use simulation::{run_scenario, Model, Scenario, ScenarioResult};
pub use stats_core::{
    bias_corrected_r, clamp_r, fisher_z, integral_z_to_r, inv_fisher, normal_quantile, pearson_r, simpson_integrate,
    t_quantile, truncnorm_mean_shift, CorrelationValue, QuadratureSpec, ZValue,
};
