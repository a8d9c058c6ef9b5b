//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::time::{Duration, Instant};

use corrmeta::ci_methods::{hc_variance, kh_variance, wild_bootstrap_variance, BootstrapSpec, GammaMode, HcVariant};
use corrmeta::simulation::{
    beta_params, replica_grid, run_replicates, run_scenario, single_study_grid, size_settings, Model, Scenario,
    ScenarioResult,
};
use corrmeta::stats_core::special::t_quantile;
use corrmeta::stats_core::{normal_quantile, QuadratureSpec};
use corrmeta::streams::derive_seed;
use corrmeta::{
    builtin, integral_z_to_r, iv_pooled, r_scale_summary, sj_tau2, CiMethod, CiOptions, CorrelationValue, MetaFit,
    PooledZ, StudySummary, ZStudy, ZValue, DEFAULT_SEED,
};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;

const REPS: usize = 2000;

#[derive(Default)]
struct Criterion {
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn check(&mut self, ok: bool, detail: String) {
        self.checks.push((ok, detail));
    }

    fn within(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, format!("{label}: got {got:.4}, want {want} ± {tol}"));
    }

    fn interval(&mut self, label: &str, got: (f64, f64), want: (f64, f64), tol: f64) {
        let ok = (got.0 - want.0).abs() <= tol && (got.1 - want.1).abs() <= tol;
        self.check(
            ok,
            format!(
                "{label}: got [{:.4}, {:.4}], want [{}, {}] ± {tol}",
                got.0, got.1, want.0, want.1
            ),
        );
    }

    fn range(&mut self, label: &str, got: f64, lo: f64, hi: f64) {
        self.check(
            lo <= got && got <= hi,
            format!("{label}: got {got:.4}, want in [{lo}, {hi}]"),
        );
    }

    fn runtime(&mut self, label: &str, elapsed: Duration, limit: Duration) {
        self.check(
            elapsed < limit,
            format!(
                "{label}: {:.2}s, limit {:.0}s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            ),
        );
    }

    fn passed(&self) -> bool {
        self.checks.iter().all(|(ok, _)| *ok)
    }
}

fn fit(name: &str, filter: Option<(&str, &str)>, options: CiOptions) -> MetaFit {
    let mut data = builtin(name).unwrap();
    if let Some((attr, value)) = filter {
        data = data.filter(attr, value).unwrap();
    }
    MetaFit::new(&data.studies(), options).unwrap()
}

fn bounds(fit: &MetaFit, method: CiMethod) -> (f64, f64) {
    let ci = fit.ci(method, 0.05).unwrap();
    (ci.lower_r, ci.upper_r)
}

fn coverage(res: &ScenarioResult, method: CiMethod) -> f64 {
    res.get(method).unwrap().coverage
}

fn criterion_1(c: &mut Criterion) {
    let start = Instant::now();
    let f = fit("molloy2014", None, CiOptions::default());
    let table = [
        (CiMethod::Hovz, (0.081, 0.221)),
        (CiMethod::Hs, (0.073, 0.174)),
        (CiMethod::Kh, (0.080, 0.218)),
        (CiMethod::Hc3, (0.081, 0.218)),
        (CiMethod::Hc4, (0.083, 0.216)),
    ];
    for (m, want) in table {
        c.interval(&format!("molloy all {m}"), bounds(&f, m), want, 0.002);
    }
    c.runtime("runtime", start.elapsed(), Duration::from_secs(1));
}

fn criterion_2(c: &mut Criterion) {
    let subsets = [
        ("all", None, None, 0.012),
        (
            "cross-sectional",
            Some(("design", "cross-sectional")),
            Some((0.037, 0.291)),
            0.007,
        ),
        (
            "prospective",
            Some(("design", "prospective")),
            Some((0.043, 0.239)),
            0.016,
        ),
    ];
    for (label, filter, kh, tau2) in subsets {
        let f = fit("molloy2014", filter, CiOptions::default());
        if let Some(want) = kh {
            c.interval(&format!("{label} KH"), bounds(&f, CiMethod::Kh), want, 0.002);
        }
        let r_scale = r_scale_summary(f.studies()).unwrap();
        c.within(
            &format!("{label} tau^2 (correlation scale)"),
            r_scale.tau2,
            tau2,
            0.0005,
        );
        c.check(true, format!("{label} tau^2 (z scale, weights/psi): {:.5}", f.tau2()));
    }
}

fn criterion_3(c: &mut Criterion) {
    let santos = fit("santos2016", None, CiOptions::default());
    c.interval("santos KH", bounds(&santos, CiMethod::Kh), (0.064, 0.776), 0.005);
    c.interval("santos HC3", bounds(&santos, CiMethod::Hc3), (0.050, 0.782), 0.005);
    c.interval("santos HS", bounds(&santos, CiMethod::Hs), (0.302, 0.784), 0.005);
    let chalkidou = fit("chalkidou2012", None, CiOptions::default());
    c.interval("chalkidou KH", bounds(&chalkidou, CiMethod::Kh), (0.36, 0.81), 0.01);
    c.interval("chalkidou HS", bounds(&chalkidou, CiMethod::Hs), (0.33, 0.75), 0.01);

    let wbs = [
        ("santos2016", CiMethod::Wbs1, (0.088, 0.764)),
        ("santos2016", CiMethod::Wbs2, (0.044, 0.785)),
        ("santos2016", CiMethod::Wbs3, (0.066, 0.775)),
        ("chalkidou2012", CiMethod::Wbs1, (0.36, 0.81)),
        ("chalkidou2012", CiMethod::Wbs2, (0.31, 0.83)),
        ("chalkidou2012", CiMethod::Wbs3, (0.34, 0.82)),
    ];
    for i in 0..5u64 {
        let options = CiOptions {
            seed: derive_seed(DEFAULT_SEED, 100 + i),
            ..CiOptions::default()
        };
        let fits = [
            ("santos2016", fit("santos2016", None, options)),
            ("chalkidou2012", fit("chalkidou2012", None, options)),
        ];
        for (name, m, want) in wbs {
            let f = &fits.iter().find(|(n, _)| *n == name).unwrap().1;
            c.interval(&format!("{name} {m} seed #{i}"), bounds(f, m), want, 0.02);
        }
    }
}

fn criterion_4(c: &mut Criterion) {
    let start = Instant::now();
    let results: Vec<ScenarioResult> = single_study_grid(DEFAULT_SEED, REPS)
        .iter()
        .map(|s| run_scenario(s).unwrap())
        .collect();
    let elapsed = start.elapsed();
    let cov = |model: Model, rho: f64| -> Vec<f64> {
        results
            .iter()
            .filter(|r| r.model == model && r.rho == rho)
            .map(|r| r.methods[0].coverage)
            .collect()
    };
    for (n, (got, want)) in [20, 50, 100]
        .iter()
        .zip(cov(Model::NormalK1, 0.3).into_iter().zip([0.90, 0.93, 0.94]))
    {
        c.within(&format!("normal rho=0.3 n={n}"), got, want, 0.02);
    }
    let lognormal = cov(Model::LognormalK1, 0.7);
    for (n, (got, want)) in [20, 50, 100].iter().zip(lognormal.iter().zip([0.63, 0.57, 0.53])) {
        c.within(&format!("lognormal rho=0.7 n={n}"), *got, want, 0.03);
    }
    c.check(
        lognormal.windows(2).all(|w| w[1] < w[0]),
        format!("lognormal rho=0.7 strictly decreasing in n: {lognormal:?}"),
    );
    for (model, rho) in [(Model::NormalK1, 0.7), (Model::LognormalK1, 0.3)] {
        c.check(
            true,
            format!("{model} rho={rho} (reference only): {:?}", cov(model, rho)),
        );
    }
    c.runtime("runtime", elapsed, Duration::from_secs(60));
}

fn molloy_sizes() -> Vec<usize> {
    builtin("molloy2014").unwrap().records.iter().map(|r| r.n).collect()
}

fn criterion_5(c: &mut Criterion) {
    let grid = replica_grid("molloy", &molloy_sizes(), 0.154, 0.012, DEFAULT_SEED, REPS);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let results: Vec<ScenarioResult> = pool.install(|| grid.iter().map(|s| run_scenario(s).unwrap()).collect());
    let elapsed = start.elapsed();
    for res in &results {
        let m = res.model;
        c.within(&format!("{m} KH"), coverage(res, CiMethod::Kh), 0.954, 0.015);
        c.within(&format!("{m} HC3"), coverage(res, CiMethod::Hc3), 0.954, 0.015);
        c.within(&format!("{m} HOVz"), coverage(res, CiMethod::Hovz), 0.938, 0.015);
        c.within(&format!("{m} HS"), coverage(res, CiMethod::Hs), 0.798, 0.02);
        let rest: Vec<String> = [CiMethod::Wbs1, CiMethod::Wbs2, CiMethod::Wbs3, CiMethod::Hc4]
            .iter()
            .map(|&x| format!("{x} {:.3}", coverage(res, x)))
            .collect();
        c.check(true, format!("{m} other methods: {}", rest.join(", ")));
    }
    c.runtime("runtime (1 thread, both models)", elapsed, Duration::from_secs(300));
}

fn slice_scenarios(model: Model, rho: f64, tau: f64, ks: &[usize], methods: &[CiMethod]) -> Vec<Scenario> {
    let mut out = Vec::new();
    for (pattern, sizes) in size_settings() {
        if !ks.contains(&sizes.len()) || !(pattern.starts_with("small") || pattern.starts_with("large")) {
            continue;
        }
        let mut s = replica_grid(&pattern, &sizes, rho, tau * tau, DEFAULT_SEED, REPS)
            .into_iter()
            .find(|s| s.model == model)
            .unwrap();
        s.seed = derive_seed(
            DEFAULT_SEED,
            (rho * 1000.0) as u64 * 100 + sizes.len() as u64 + sizes[0] as u64,
        );
        s.methods = methods.to_vec();
        out.push(s);
    }
    out
}

fn criterion_6(c: &mut Criterion) {
    let methods = [CiMethod::Kh, CiMethod::Hc3, CiMethod::Hc4, CiMethod::Hs, CiMethod::Hovz];
    let rhos = [0.0, 0.5, 0.9];
    let mut cells: Vec<(f64, usize, ScenarioResult)> = Vec::new();
    for &rho in &rhos {
        for s in slice_scenarios(Model::TruncNorm, rho, 0.0, &[5, 40], &methods) {
            let k = s.k();
            cells.push((rho, k, run_scenario(&s).unwrap()));
        }
    }
    let bands = [
        (CiMethod::Kh, 0.935, 0.965),
        (CiMethod::Hc3, 0.935, 0.965),
        (CiMethod::Hc4, 0.935, 0.965),
        (CiMethod::Hs, 0.88, 0.92),
        (CiMethod::Hovz, 0.955, 0.99),
    ];
    for (m, lo, hi) in bands {
        let covs: Vec<f64> = cells.iter().map(|(_, _, r)| coverage(r, m)).collect();
        let mean = covs.iter().sum::<f64>() / covs.len() as f64;
        c.range(&format!("{m} mean coverage over slice"), mean, lo, hi);
        for k in [5, 40] {
            let by_rho: Vec<f64> = rhos
                .iter()
                .map(|&rho| {
                    let v: Vec<f64> = cells
                        .iter()
                        .filter(|(r, kk, _)| *r == rho && *kk == k)
                        .map(|(_, _, res)| coverage(res, m))
                        .collect();
                    v.iter().sum::<f64>() / v.len() as f64
                })
                .collect();
            let spread =
                by_rho.iter().cloned().fold(f64::MIN, f64::max) - by_rho.iter().cloned().fold(f64::MAX, f64::min);
            c.check(
                spread <= 0.02,
                format!("{m} K={k} spread across rho {spread:.4} <= 0.02 (by rho: {by_rho:.3?})"),
            );
        }
    }
}

fn criterion_7(c: &mut Criterion) {
    let methods = [CiMethod::Hovz, CiMethod::Kh];
    for s in slice_scenarios(Model::Beta, 0.9, 0.16, &[10], &methods) {
        let res = run_scenario(&s).unwrap();
        let hovz = coverage(&res, CiMethod::Hovz);
        let kh = coverage(&res, CiMethod::Kh);
        let p = &s.n_pattern;
        c.check(hovz < 0.80, format!("{p} HOVz {hovz:.4} < 0.80"));
        c.check(
            kh > hovz + 0.10,
            format!("{p} KH {kh:.4} > HOVz + 0.10 = {:.4}", hovz + 0.10),
        );
    }
}

fn zstudies(z: &[f64], v: f64) -> Vec<ZStudy> {
    z.iter()
        .map(|&z| ZStudy {
            z: ZValue::new(z).unwrap(),
            var_z: v,
            n: 10,
        })
        .collect()
}

fn trapezoid_psi(mu: f64, tau2: f64) -> f64 {
    let tau = tau2.sqrt();
    let (a, b) = (mu - 5.0 * tau, mu + 5.0 * tau);
    let panels = 100_000;
    let h = (b - a) / panels as f64;
    let f = |t: f64| t.tanh() * (-(t - mu).powi(2) / (2.0 * tau2)).exp() / (tau * (2.0 * std::f64::consts::PI).sqrt());
    let inner: f64 = (1..panels).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

fn bisect(mut lo: f64, mut hi: f64, target: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// Two incomplete-beta forms, each used where it does not cancel.
fn t_cdf_oracle(t: f64, df: f64) -> f64 {
    if t * t < df {
        0.5 + 0.5 * t.signum() * beta_reg(0.5, df / 2.0, t * t / (df + t * t))
    } else {
        let lower = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
        if t < 0.0 {
            lower
        } else {
            1.0 - lower
        }
    }
}

fn criterion_8(c: &mut Criterion) {
    let start = Instant::now();
    let quad = QuadratureSpec::default();

    // psi on a 20 x 5 grid
    let mus: Vec<f64> = (0..20).map(|i| -2.0 + 4.0 * i as f64 / 19.0).collect();
    let tau2s = [0.005, 0.02, 0.05, 0.1, 0.3];
    let mut odd = true;
    let mut monotone = true;
    let mut shrink = true;
    for &t2 in &tau2s {
        let mut prev = f64::NEG_INFINITY;
        for &mu in &mus {
            let p = integral_z_to_r(ZValue::new(mu).unwrap(), t2, &quad).unwrap().get();
            let m = integral_z_to_r(ZValue::new(-mu).unwrap(), t2, &quad).unwrap().get();
            odd &= (p + m).abs() <= 1e-14;
            monotone &= p >= prev;
            shrink &= p.abs() < mu.tanh().abs();
            prev = p;
        }
    }
    c.check(odd, "psi odd in mu on 20x5 grid".into());
    c.check(monotone, "psi nondecreasing in mu on 20x5 grid".into());
    c.check(shrink, "|psi| < |tanh mu| on 20x5 grid".into());
    let psi = integral_z_to_r(ZValue::new(0.6).unwrap(), 0.04, &quad).unwrap().get();
    c.within(
        "psi(0.6 | 0.04) vs 100000-panel trapezoid",
        psi,
        trapezoid_psi(0.6, 0.04),
        1e-6,
    );

    // three-study hand oracles
    let zs = zstudies(&[0.0, 0.5, 1.0], 0.1);
    let tau0 = (0.25 + 0.0 + 0.25) / 3.0;
    let q = tau0 / (0.1 + tau0);
    let sj_hand = q * (0.25 + 0.25) / 2.0;
    c.within("SJ hand oracle", sj_tau2(&zs).unwrap(), sj_hand, 1e-10);
    let equal = PooledZ {
        z_bar: ZValue::new(0.5).unwrap(),
        weights: vec![1.6; 3],
        tau2: 0.0,
        k: 3,
    };
    let zs = zstudies(&[0.0, 0.5, 1.0], 0.625);
    c.within("KH hand oracle", kh_variance(&zs, &equal).unwrap(), 1.0 / 12.0, 1e-10);
    c.within(
        "HC3 hand oracle",
        hc_variance(&zs, &equal, HcVariant::Hc3).unwrap(),
        2.56 * 0.5 * 2.25 / 23.04,
        1e-10,
    );
    c.within(
        "HC4 hand oracle",
        hc_variance(&zs, &equal, HcVariant::Hc4).unwrap(),
        2.56 * 0.5 * 1.5 / 23.04,
        1e-10,
    );

    // bootstrap with zero residuals
    let flat: Vec<ZStudy> = (0..6)
        .map(|i| ZStudy {
            z: ZValue::new(0.25).unwrap(),
            var_z: 1.0 / (20.0 + i as f64),
            n: 23 + i,
        })
        .collect();
    let pooled = iv_pooled(&flat, 0.0).unwrap();
    let zero = (0..20u64).all(|seed| {
        [GammaMode::One, GammaMode::Km1OverKm3, GammaMode::Km2OverKm3]
            .iter()
            .all(|&g| {
                let spec = BootstrapSpec::new(200, g, seed).unwrap();
                wild_bootstrap_variance(&flat, &pooled, &spec).unwrap() == 0.0
            })
    });
    c.check(
        zero,
        "bootstrap variance exactly 0 with zero residuals (20 seeds x 3 gammas)".into(),
    );

    // tau = 0 model equivalence, replicate by replicate
    for rho in [0.0, 0.5, 0.9] {
        let grid = replica_grid("eq", &[15, 16, 19, 23, 27, 60, 80], rho, 0.0, 7, 300);
        let a = run_replicates(&grid[0]).unwrap();
        let b = run_replicates(&grid[1]).unwrap();
        c.check(
            grid[0].model != grid[1].model && a == b,
            format!("tau=0 truncnorm and beta identical per replicate (rho={rho}, 300 reps)"),
        );
    }

    // 1 vs 8 workers
    let mut s = replica_grid("det", &[15, 16, 19, 23, 27, 60, 80, 120], 0.5, 0.0256, 11, 200)
        .into_iter()
        .find(|s| s.model == Model::Beta)
        .unwrap();
    s.options.bootstrap_reps = 200;
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (run_scenario(&s).unwrap(), run_replicates(&s).unwrap()))
    };
    let one = run_with(1);
    let eight = run_with(8);
    let bits = |r: &ScenarioResult| -> Vec<(u64, u64)> {
        r.methods
            .iter()
            .map(|m| (m.coverage.to_bits(), m.mean_length.to_bits()))
            .collect()
    };
    c.check(
        one.1 == eight.1 && bits(&one.0) == bits(&eight.0),
        "identical results on 1 and 8 workers".into(),
    );

    // quantiles against bisection on statrs CDFs
    let normal = Normal::standard();
    let mut worst_normal: f64 = 0.0;
    let mut worst_t: f64 = 0.0;
    for &p in &[1e-6, 0.001, 0.025, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.999, 1.0 - 1e-6] {
        let oracle = bisect(-10.0, 10.0, p, |x| normal.cdf(x));
        worst_normal = worst_normal.max((normal_quantile(p).unwrap() - oracle).abs());
        for df in [1u64, 2, 4, 9, 15, 30, 100] {
            let oracle = bisect(-1e7, 1e7, p, |x| t_cdf_oracle(x, df as f64));
            let q = t_quantile(p, df).unwrap();
            worst_t = worst_t.max((q - oracle).abs() / oracle.abs().max(1.0));
        }
    }
    c.check(
        worst_normal <= 1e-8,
        format!("normal quantile max error {worst_normal:.2e} <= 1e-8"),
    );
    c.check(
        worst_t <= 1e-8,
        format!("t quantile max (relative) error {worst_t:.2e} <= 1e-8"),
    );

    // beta moment identities
    let mut worst_moment: f64 = 0.0;
    for rho in [-0.9, -0.3, 0.0, 0.1, 0.5, 0.7, 0.9] {
        for tau in [0.05, 0.16, 0.3, 0.4] {
            let tau2: f64 = tau * tau;
            let Ok(p) = beta_params(CorrelationValue::new(rho).unwrap(), tau2) else {
                continue;
            };
            let (a, b) = (p.a, p.b);
            let mean = 2.0 * (a / (a + b)) - 1.0;
            let var = 4.0 * a * b / ((a + b).powi(2) * (a + b + 1.0));
            worst_moment = worst_moment.max((mean - rho).abs()).max((var - tau2).abs());
        }
    }
    c.check(
        worst_moment <= 1e-10,
        format!("beta moment identities max error {worst_moment:.2e} <= 1e-10"),
    );

    // reference check that StudySummary validation matches the ingestion floor
    c.check(StudySummary::new(0.1, 3).is_err(), "n < 4 rejected".into());
    c.runtime("runtime", start.elapsed(), Duration::from_secs(120));
}

type Entry = (&'static str, fn(&mut Criterion));

fn main() {
    let criteria: [Entry; 8] = [
        ("Molloy all-designs intervals", criterion_1),
        ("Molloy subgroups and heterogeneity", criterion_2),
        ("Santos and Chalkidou reanalyses", criterion_3),
        ("single-study asymptotic coverage", criterion_4),
        ("Molloy-replica coverage", criterion_5),
        ("fixed-effect grid slice", criterion_6),
        ("beta-model ordering", criterion_7),
        ("property suite", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let total = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("criterion_{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let mut c = Criterion::default();
        run(&mut c);
        for (ok, detail) in &c.checks {
            println!("    [{}] {detail}", if *ok { "ok" } else { "FAIL" });
        }
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        println!("{verdict} {id}: {name} ({:.1}s)", start.elapsed().as_secs_f64());
        if !c.passed() {
            failed += 1;
        }
    }
    println!(
        "acceptance: {failed} failed, total {:.1}s",
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
