//! Argument parsing and dispatch for the `hga` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_config, parse_override, ConfigError, Experiment, Overrides};
use crate::plot::emit_plot;
use crate::run::run_experiment;

/// Hierarchical genetic algorithm experiments.
#[derive(Parser)]
#[command(name = "hga", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Soft-TSP with fixed penalties, compared against the double-tree baseline.
    SoftTsp(RunArgs),
    /// Soft-TSP with a penalty schedule, paired with a fixed-penalty run.
    AdaptiveTsp(RunArgs),
    /// Soft-TSP where the high-penalty vertex set is redrawn mid-run.
    Switch(RunArgs),
    /// Polynomial regression against a hidden Huber oracle.
    Regress(RunArgs),
    /// Polynomial regression against a region-weighted Huber oracle.
    RegressWeighted(RunArgs),
    /// Small soft-TSP instance checked against the exact optimum.
    Oracle(RunArgs),
    /// Draw learning curves from run CSV files.
    Plot(PlotArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// JSON file merged over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single solver seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated solver seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sub-solver generations per meta generation.
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    meta_generations: Option<usize>,
    /// Extra override, e.g. `meta.mutation_rate=0.3`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Run CSV files, one series each.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Draw a horizontal reference line at this cost.
    #[arg(long)]
    baseline: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl AppError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

fn overrides(args: &RunArgs) -> Result<Overrides, ConfigError> {
    let mut patches = Vec::new();
    let seeds = args.seed.map(|s| vec![s]).or_else(|| args.seeds.clone());
    if let Some(seeds) = seeds {
        patches.push(json!({ "seeds": seeds }));
    }
    if let Some(out) = &args.out {
        patches.push(json!({ "output_dir": out }));
    }
    if let Some(k) = args.generations {
        patches.push(json!({ "k_subgens": k }));
    }
    if let Some(g) = args.meta_generations {
        patches.push(json!({ "meta_generations": g }));
    }
    for s in &args.set {
        patches.push(parse_override(s)?);
    }
    Ok(Overrides {
        file: args.config.clone(),
        patches,
    })
}

/// Runs one subcommand and returns the files it wrote.
pub fn execute(command: Command) -> Result<Vec<PathBuf>, AppError> {
    let (experiment, args) = match command {
        Command::Plot(p) => {
            emit_plot(&p.inputs, &p.out, p.baseline)?;
            return Ok(vec![p.out]);
        }
        Command::SoftTsp(a) => (Experiment::SoftTsp, a),
        Command::AdaptiveTsp(a) => (Experiment::AdaptiveTsp, a),
        Command::Switch(a) => (Experiment::ConstraintSwitch, a),
        Command::Regress(a) => (Experiment::Regression, a),
        Command::RegressWeighted(a) => (Experiment::WeightedRegression, a),
        Command::Oracle(a) => (Experiment::Oracle, a),
    };
    let cfg = parse_config(experiment, &overrides(&args)?)?;
    Ok(run_experiment(&cfg)?)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 for usage or configuration errors,
/// 2 for runtime failures.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
