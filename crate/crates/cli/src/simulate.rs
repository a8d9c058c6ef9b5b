use std::fs::File;
use std::io::Write;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use corrmeta::simulation::{
    aggregate, default_grid_seeded, read_grid, replica_grid, run_scenario, single_study_grid, GridDefaults,
    ScenarioResult, FULL_REPS,
};
use corrmeta::{builtin, CiOptions, Scenario};

use crate::args::{Format, SimulateArgs};
use crate::report::{csv_writer, open_output, write_comment_block, write_json};

/// True correlation and heterogeneity of the Molloy replica cell.
const MOLLOY_RHO: f64 = 0.154;
const MOLLOY_TAU2: f64 = 0.012;

#[derive(Debug, Serialize)]
struct Config {
    command: &'static str,
    version: &'static str,
    grid: String,
    cells: usize,
    reps: usize,
    methods: Vec<String>,
    alpha: f64,
    tau_estimator: &'static str,
    backtransform: String,
    bootstrap_reps: usize,
    seed: u64,
    within: String,
    lognormal: String,
    fixed_effect: bool,
    bias_correction: bool,
}

/// One line of output: a single cell, or an average over size settings.
#[derive(Debug, Serialize)]
struct Row {
    level: &'static str,
    scenario_id: Option<String>,
    model: String,
    rho: f64,
    tau: f64,
    k: Option<usize>,
    n_pattern: Option<String>,
    method: String,
    cells: usize,
    coverage: f64,
    mean_length: f64,
    failures: Option<usize>,
    mc_se: Option<f64>,
}

fn cell_rows(res: &ScenarioResult) -> impl Iterator<Item = Row> + '_ {
    res.rows().into_iter().map(|r| Row {
        level: "cell",
        scenario_id: Some(r.scenario_id),
        model: r.model,
        rho: r.rho,
        tau: r.tau,
        k: Some(r.k),
        n_pattern: Some(r.n_pattern),
        method: r.method,
        cells: 1,
        coverage: r.coverage,
        mean_length: r.mean_length,
        failures: Some(r.failures),
        mc_se: Some(r.mc_se),
    })
}

fn build_grid(args: &SimulateArgs, reps: usize, options: CiOptions) -> Result<Vec<Scenario>> {
    let m = &args.method;
    let mut grid = match args.grid.as_str() {
        "default" => default_grid_seeded(m.seed, reps),
        "table1" => single_study_grid(m.seed, reps),
        "molloy" => {
            let sizes: Vec<usize> = builtin("molloy2014")?.records.iter().map(|r| r.n).collect();
            replica_grid("molloy", &sizes, MOLLOY_RHO, MOLLOY_TAU2, m.seed, reps)
        }
        path => {
            let defaults = GridDefaults {
                reps,
                alpha: m.alpha,
                base_seed: m.seed,
                methods: m.methods(),
                within: args.within,
                coupling: args.lognormal,
                options,
            };
            let file = File::open(path).with_context(|| format!("opening grid {path}"))?;
            return read_grid(file, &defaults).with_context(|| format!("reading grid {path}"));
        }
    };
    for s in &mut grid {
        s.alpha = m.alpha;
        s.methods = m.methods();
        s.within = args.within;
        s.coupling = args.lognormal;
        s.options = options;
        s.validate().with_context(|| format!("cell {}", s.id))?;
    }
    Ok(grid)
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let m = &args.method;
    let reps = if args.full_scale { FULL_REPS } else { args.reps };
    let options = CiOptions {
        backtransform: m.backtransform,
        bootstrap_reps: m.bootstrap_reps,
        seed: m.seed,
        bias_correction: m.bias_correct,
        fixed_effect: args.fixed_effect,
        ..CiOptions::default()
    };
    let grid = build_grid(args, reps, options)?;
    let config = Config {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        grid: args.grid.clone(),
        cells: grid.len(),
        reps,
        methods: m.methods().iter().map(|m| m.to_string()).collect(),
        alpha: m.alpha,
        tau_estimator: "SJ",
        backtransform: m.backtransform.map_or("auto".to_string(), |b| b.to_string()),
        bootstrap_reps: m.bootstrap_reps,
        seed: m.seed,
        within: format!("{:?}", args.within).to_lowercase(),
        lognormal: format!("{:?}", args.lognormal).to_lowercase(),
        fixed_effect: args.fixed_effect,
        bias_correction: m.bias_correct,
    };

    let mut out = open_output(args.output.output.as_deref())?;
    let mut results = Vec::with_capacity(grid.len());
    let mut failed = 0usize;
    match args.output.format {
        Format::Csv => {
            write_comment_block(&mut *out, &config)?;
            let mut w = csv_writer(&mut out);
            for s in &grid {
                match run_scenario(s) {
                    Ok(res) => {
                        for row in cell_rows(&res) {
                            w.serialize(row)?;
                        }
                        w.flush()?;
                        results.push(res);
                    }
                    Err(e) => {
                        eprintln!("error: cell {} failed: {e}", s.id);
                        failed += 1;
                    }
                }
            }
            for row in aggregate_rows(&results) {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            for s in &grid {
                match run_scenario(s) {
                    Ok(res) => results.push(res),
                    Err(e) => {
                        eprintln!("error: cell {} failed: {e}", s.id);
                        failed += 1;
                    }
                }
            }
            let mut rows: Vec<Row> = results.iter().flat_map(cell_rows).collect();
            rows.extend(aggregate_rows(&results));
            write_json(&mut *out, &config, Vec::new(), &rows)?;
        }
    }
    out.flush()?;
    if failed > 0 {
        bail!("{failed} of {} cells failed", grid.len());
    }
    Ok(())
}

fn aggregate_rows(results: &[ScenarioResult]) -> Vec<Row> {
    aggregate(results)
        .into_iter()
        .map(|a| Row {
            level: "aggregate",
            scenario_id: None,
            model: a.model,
            rho: a.rho,
            tau: a.tau,
            k: None,
            n_pattern: None,
            method: a.method,
            cells: a.cells,
            coverage: a.coverage,
            mean_length: a.mean_length,
            failures: None,
            mc_se: None,
        })
        .collect()
}
