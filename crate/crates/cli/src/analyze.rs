use std::io::Write;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use corrmeta::{builtin, builtin_names, load_csv, r_scale_summary, CiMethod, CiOptions, Dataset, MetaFit};

use crate::args::{AnalyzeArgs, Format};
use crate::report::{csv_writer, open_output, write_comment_block, write_json};

#[derive(Debug, Serialize)]
struct Config {
    command: &'static str,
    version: &'static str,
    dataset: String,
    source: String,
    filters: Vec<String>,
    methods: Vec<String>,
    alpha: f64,
    tau_estimator: &'static str,
    backtransform: String,
    bootstrap_reps: usize,
    seed: u64,
    fixed_effect: bool,
    bias_correction: bool,
}

#[derive(Debug, Serialize)]
struct Row {
    dataset: String,
    effects: &'static str,
    method: String,
    point_r: Option<f64>,
    lower_r: Option<f64>,
    upper_r: Option<f64>,
    se_z: Option<f64>,
    tau2_sj: f64,
    k: usize,
    n: usize,
    df: Option<u64>,
    backtransform: Option<String>,
    note: String,
}

fn resolve(args: &AnalyzeArgs) -> Result<(Dataset, String)> {
    if let Some(path) = &args.input {
        let d = load_csv(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((d, path.display().to_string()));
    }
    if let Some(name) = &args.builtin {
        return Ok((builtin(name)?, format!("builtin:{name}")));
    }
    match &args.dataset {
        Some(name) if builtin_names().contains(&name.as_str()) => Ok((builtin(name)?, format!("builtin:{name}"))),
        Some(path) => {
            let d = load_csv(path).with_context(|| format!("reading {path}"))?;
            Ok((d, path.clone()))
        }
        None => bail!("no dataset given; pass a built-in name, --builtin or --input"),
    }
}

fn rows_for(dataset: &Dataset, fit: &MetaFit, methods: &[CiMethod], alpha: f64, effects: &'static str) -> Vec<Row> {
    methods
        .iter()
        .map(|&m| {
            let mut row = Row {
                dataset: dataset.name.clone(),
                effects,
                method: m.to_string(),
                point_r: None,
                lower_r: None,
                upper_r: None,
                se_z: None,
                tau2_sj: fit.tau2(),
                k: fit.k(),
                n: fit.n_total(),
                df: None,
                backtransform: None,
                note: String::new(),
            };
            match fit.ci(m, alpha) {
                Ok(ci) => {
                    row.point_r = Some(ci.point_r);
                    row.lower_r = Some(ci.lower_r);
                    row.upper_r = Some(ci.upper_r);
                    row.se_z = Some(ci.se);
                    row.df = ci.df;
                    row.backtransform = Some(ci.backtransform.to_string());
                }
                Err(e) => {
                    eprintln!("warning: {m} ({effects}) skipped: {e}");
                    row.note = e.to_string();
                }
            }
            row
        })
        .collect()
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let (mut dataset, source) = resolve(args)?;
    for (key, value) in &args.filter {
        dataset = dataset.filter(key, value)?;
    }
    let methods = args.method.methods();
    let m = &args.method;
    let options = CiOptions {
        backtransform: m.backtransform,
        bootstrap_reps: m.bootstrap_reps,
        seed: m.seed,
        bias_correction: m.bias_correct,
        ..CiOptions::default()
    };

    let config = Config {
        command: "analyze",
        version: env!("CARGO_PKG_VERSION"),
        dataset: dataset.name.clone(),
        source,
        filters: args.filter.iter().map(|(k, v)| format!("{k}={v}")).collect(),
        methods: methods.iter().map(|m| m.to_string()).collect(),
        alpha: m.alpha,
        tau_estimator: "SJ",
        backtransform: m.backtransform.map_or("auto".to_string(), |b| b.to_string()),
        bootstrap_reps: m.bootstrap_reps,
        seed: m.seed,
        fixed_effect: args.fixed_effect,
        bias_correction: m.bias_correct,
    };

    let studies = dataset.studies();
    let fit = MetaFit::new(&studies, options)?;
    let mut rows = rows_for(&dataset, &fit, &methods, m.alpha, "random");
    if args.fixed_effect {
        let fixed = MetaFit::new(
            &studies,
            CiOptions {
                fixed_effect: true,
                ..options
            },
        )?;
        rows.extend(rows_for(&dataset, &fixed, &methods, m.alpha, "fixed"));
    }
    let summary = r_scale_summary(&studies).ok();

    let mut out = open_output(args.output.output.as_deref())?;
    match args.output.format {
        Format::Csv => {
            write_comment_block(&mut *out, &config)?;
            if let Some(s) = &summary {
                writeln!(
                    out,
                    "# r_scale: r_fixed={} r_random={} tau2={}",
                    s.r_fixed, s.r_random, s.tau2
                )?;
            }
            let mut w = csv_writer(&mut out);
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let extra = vec![("r_scale", json!(summary))];
            write_json(&mut *out, &config, extra, &rows)?;
        }
    }
    out.flush()?;
    Ok(())
}
