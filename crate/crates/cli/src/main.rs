//! `arbor`: synthetic fixtures, sky view factors, Tmrt simulation, tree
//! placement optimization, counterfactual relocation and analysis.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use arbor_core::meteo::PeriodKind;
use arbor_core::optimize::Method;
use arbor_core::raster::StreetPattern;
use arbor_core::tmrt::BinSpec;
use arbor_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "arbor", version, about = "Tree placement against mean radiant temperature")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic study area and a synthetic hourly meteorology CSV.
    Synth(SynthArgs),
    /// Compute sky view factor rasters.
    Svf(SvfArgs),
    /// Aggregated Tmrt from the fast and the reference evaluator.
    Simulate(SimulateArgs),
    /// Place trees with the iterated local search or a baseline.
    Optimize(OptimizeArgs),
    /// Remove existing trees and re-optimize their positions.
    Counterfactual(CounterfactualArgs),
    /// Metrics and temporal profiles of a placement.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 0.3)]
    building_density: f64,
    #[arg(long, default_value_t = 0.1)]
    vegetation_density: f64,
    #[arg(long, value_enum, default_value_t = Pattern::Grid)]
    pattern: Pattern,
    /// Add a water strip across the area.
    #[arg(long)]
    water: bool,
    /// First day of the meteorology series.
    #[arg(long, default_value = "2020-01-01")]
    start: chrono::NaiveDate,
    /// Number of days of hourly meteorology.
    #[arg(long, default_value_t = 366)]
    days: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Pattern {
    Grid,
    Irregular,
    Open,
}

impl From<Pattern> for StreetPattern {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Grid => StreetPattern::Grid,
            Pattern::Irregular => StreetPattern::Irregular,
            Pattern::Open => StreetPattern::Open,
        }
    }
}

#[derive(Args, Debug)]
struct SvfArgs {
    #[arg(long)]
    area: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Inputs shared by every command that evaluates Tmrt.
#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long)]
    area: PathBuf,
    #[arg(long)]
    meteo: PathBuf,
    /// day, week, year, decade or all.
    #[arg(long, default_value = "day")]
    period: PeriodKind,
    /// Sun-position bins as AZIMUTHxELEVATION.
    #[arg(long, default_value = "36x9")]
    bins: BinSpec,
    /// Radiation parameter override, `key=value`; repeatable.
    #[arg(long = "params", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Height of placed trees, m.
    #[arg(long, default_value_t = 12.0)]
    tree_height: f64,
    /// Crown diameter of placed trees, m.
    #[arg(long, default_value_t = 9.0)]
    crown_diameter: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Search hyperparameters.
#[derive(Args, Debug, Clone)]
struct SearchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 5)]
    buffer: usize,
    #[arg(long, default_value_t = 20)]
    population: usize,
    /// GA generations per perturbation.
    #[arg(long, default_value_t = 200)]
    generations: usize,
    /// Generations of the standalone genetic baseline.
    #[arg(long, default_value_t = 5000)]
    genetic_generations: usize,
    #[arg(long, default_value_t = 0.1)]
    mutation: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    k: usize,
    /// ils, random, greedy-tmrt, greedy-delta or genetic.
    #[arg(long, default_value = "ils")]
    method: Method,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CounterfactualArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Placement CSV (`tree_id,row,col`).
    #[arg(long)]
    placement: PathBuf,
    /// Aggregated Tmrt without the placement; computed when absent.
    #[arg(long)]
    before: Option<PathBuf>,
    /// Aggregated Tmrt with the placement; computed when absent.
    #[arg(long)]
    after: Option<PathBuf>,
    /// Heat-stress threshold, °C.
    #[arg(long, default_value_t = 60.0)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Capacity { .. } | Error::Infeasible(_) => 3,
        Error::StaleSvf | Error::Undefined(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure threads: {e}");
            return ExitCode::from(4);
        }
    }
    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Svf(a) => commands::svf(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Counterfactual(a) => commands::counterfactual(a),
        Command::Analyze(a) => commands::analyze(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(4),
    }
}
