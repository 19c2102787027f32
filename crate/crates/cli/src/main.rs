//! `gsaa`: solve demand-response markets and rank prosumer resource capacities
//! by their shadow prices.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible scenario,
//! 3 a verified allocation is not an equilibrium.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gsaa", version, about = "Shadow-price sensitivity analysis for demand-response markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the DSO problem and report the competitive equilibrium.
    Solve(SolveArgs),
    /// Check whether an allocation and price form a competitive equilibrium.
    Verify(VerifyArgs),
    /// Closed-form shadow prices (quadratic setting) and a ranking.
    GsaaQuad(EstimateArgs),
    /// Shadow-price bounds (general convex setting) and a ranking.
    GsaaBounds(BoundsArgs),
    /// Incremental relaxation: projected vs realized welfare gains.
    Sweep(SweepArgs),
    /// Two-prosumer EV comparison with scaled utilities.
    CaseStudy(CaseStudyArgs),
    /// Write a scenario: seeded random draw or a named preset.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct ScenarioSource {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: paper-sec6-net-sell, paper-sec6-ev or paper-sec6-convex.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArg {
    /// Directory for CSV/JSON artifacts; nothing is written without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    #[command(flatten)]
    pub out: OutArg,
    /// KKT tolerance of the numeric solves.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    /// Allocation CSV with columns prosumer,appliance,period,q,price.
    #[arg(long)]
    pub allocation: PathBuf,
    /// Supply CSV with columns period,supply; defaults to total demand.
    #[arg(long)]
    pub supply: Option<PathBuf>,
    /// Largest accepted residual.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

/// The resource capacity under study.
#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct TargetArgs {
    /// EV discharge limit at `--period`.
    #[arg(long)]
    pub ev: bool,
    /// Net-buying row at `--period`.
    #[arg(long)]
    pub net_sell: bool,
    /// Upper comfort limit of the thermostat-like window ending at `--period`.
    #[arg(long)]
    pub ac: bool,
    /// Explicit row as `prosumer:row` (0-based row index).
    #[arg(long, value_name = "P:J")]
    pub constraint: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub out: OutArg,
    /// 1-based period of the target row.
    #[arg(long, default_value_t = 1)]
    pub period: usize,
    /// Relaxation size used for welfare projections.
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Rank estimates whose tightness assumption failed.
    #[arg(long)]
    pub include_flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Anchors {
    Zero,
    OperatingPoint,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub estimate: EstimateArgs,
    /// Expansion points of the surrogate problems.
    #[arg(long, value_enum, default_value_t = Anchors::Zero)]
    pub anchors: Anchors,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    #[command(flatten)]
    pub target: TargetArgs,
    #[command(flatten)]
    pub out: OutArg,
    #[arg(long, default_value_t = 1)]
    pub period: usize,
    /// Capacity added per step.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct CaseStudyArgs {
    #[command(flatten)]
    pub out: OutArg,
    /// Utility scaling of prosumer 2.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// Allowed discharge for the headline comparison.
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Largest allowed discharge in the bounds table.
    #[arg(long, default_value_t = 2.0)]
    pub k_max: f64,
    /// Grid intervals of the bounds table.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = -0.01, allow_hyphen_values = true)]
    pub a_hat: f64,
    /// Prosumer 1's first-order coefficient (initial utility increasing rate).
    #[arg(long, default_value_t = 0.1)]
    pub b_hat: f64,
    #[arg(long, default_value_t = 0.018)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.022)]
    pub lipschitz: f64,
    #[arg(long, default_value_t = 0.4)]
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    NetSell,
    Ev,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Seed of the coefficient draw.
    #[arg(long, conflicts_with = "preset")]
    pub seed: Option<u64>,
    /// Built-in scenario instead of a random draw: paper-sec6-net-sell,
    /// paper-sec6-ev or paper-sec6-convex.
    #[arg(long)]
    pub preset: Option<String>,
    /// Which capacity the generated scenario exposes.
    #[arg(long, value_enum, default_value_t = ExperimentArg::Ev)]
    pub experiment: ExperimentArg,
    /// Directory for `scenario.json`; stdout without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
