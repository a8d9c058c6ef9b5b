use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corrmeta::simulation::{LognormalCoupling, WithinStudy};
use corrmeta::{Backtransform, CiMethod, DEFAULT_SEED};

#[derive(Debug, Parser)]
#[command(
    name = "corrmeta",
    version,
    about = "Confidence intervals for pooled Pearson correlations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pool one dataset with every requested interval method.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo coverage grid.
    Simulate(SimulateArgs),
    /// List or print the built-in datasets.
    Datasets {
        #[command(subcommand)]
        action: DatasetAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetAction {
    List {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    Show {
        name: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Built-in name or CSV path.
    pub dataset: Option<String>,
    #[arg(long, conflicts_with_all = ["dataset", "builtin"])]
    pub input: Option<PathBuf>,
    #[arg(long, conflicts_with = "dataset")]
    pub builtin: Option<String>,
    /// Keep studies whose column equals the value; repeatable.
    #[arg(long, value_name = "KEY=VALUE", value_parser = parse_filter)]
    pub filter: Vec<(String, String)>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Also report every method with τ² = 0.
    #[arg(long)]
    pub fixed_effect: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `default`, `table1`, `molloy`, or a grid CSV path.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long, default_value_t = corrmeta::simulation::DEFAULT_REPS, value_parser = parse_reps)]
    pub reps: usize,
    /// Use 10 000 replicates per cell.
    #[arg(long, conflicts_with = "reps")]
    pub full_scale: bool,
    #[arg(long, default_value = "raw", value_parser = parse_from_str::<WithinStudy>)]
    pub within: WithinStudy,
    #[arg(long, default_value = "linearmix", value_parser = parse_from_str::<LognormalCoupling>)]
    pub lognormal: LognormalCoupling,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Pool every replicate with τ² = 0.
    #[arg(long)]
    pub fixed_effect: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Comma-separated, e.g. `KH,HC4`; default all.
    #[arg(long, value_delimiter = ',', value_parser = parse_from_str::<CiMethod>)]
    pub methods: Vec<CiMethod>,
    #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
    pub alpha: f64,
    /// Overrides the back-transform of z-based methods.
    #[arg(long, value_parser = parse_from_str::<Backtransform>)]
    pub backtransform: Option<Backtransform>,
    #[arg(long, default_value_t = 1000, value_parser = parse_reps)]
    pub bootstrap_reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Bias-correct each r before pooling.
    #[arg(long)]
    pub bias_correct: bool,
}

impl MethodArgs {
    pub fn methods(&self) -> Vec<CiMethod> {
        if self.methods.is_empty() {
            CiMethod::ALL.to_vec()
        } else {
            self.methods.clone()
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker count or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_threads)]
    pub threads: Threads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Count(usize),
}

fn parse_from_str<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_filter(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    if k.trim().is_empty() {
        return Err("empty filter key".into());
    }
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

fn parse_reps(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n >= 2 {
        Ok(n)
    } else {
        Err(format!("need at least 2 replicates, got {n}"))
    }
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) => Ok(Threads::Auto),
        Ok(n) => Ok(Threads::Count(n)),
        Err(e) => Err(format!("threads: {e}")),
    }
}
