use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "forestbound",
    version,
    about = "Induced-forest bounds for regular graphs of large girth"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format (defaults to csv for `trace`, text otherwise).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Shorthand for `--format json`.
    #[arg(long, global = true, conflicts_with = "format")]
    pub json: bool,

    /// Significant digits for every printed number.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=17))]
    pub precision: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate ξ at one p0, or maximise it over p0.
    Bound(BoundArgs),
    /// Optimised ξ(r) and Ξ(r) = 1 - ξ(r) for a range of degrees.
    Table(TableArgs),
    /// Density trajectories of the recurrences or the limiting ODE.
    #[command(
        after_help = "CSV columns:\n  exact, linearized: step,w,b,q,s,t\n  ode:               x,w,b,q,s,t,b_integral_so_far"
    )]
    Trace(TraceArgs),
    /// Run the forest-growing algorithm on random or supplied graphs.
    Simulate(SimulateArgs),
    /// Compare density formulas with brute force on regular trees.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub r: usize,
    /// Evaluate at this p0 instead of optimising.
    #[arg(long)]
    pub p0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, default_value_t = 3)]
    pub r_min: usize,
    #[arg(long, default_value_t = 10)]
    pub r_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceMode {
    Exact,
    Linearized,
    Ode,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long, value_enum)]
    pub mode: TraceMode,
    #[arg(long)]
    pub r: usize,
    #[arg(long)]
    pub p0: f64,
    /// Per-step label probability (recurrence modes).
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of steps (recurrence modes); defaults to ceil(5 / p).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Report the ODE on a uniform grid with this spacing instead of the
    /// solver's own steps.
    #[arg(long)]
    pub dx: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Vertices of each random regular graph.
    #[arg(long, required_unless_present_any = ["graph", "fixture"], requires = "r")]
    pub n: Option<usize>,
    /// Degree of each random regular graph.
    #[arg(long)]
    pub r: Option<usize>,
    /// Graph file: "n m" then one "u v" line per edge.
    #[arg(long, conflicts_with_all = ["n", "fixture"])]
    pub graph: Option<PathBuf>,
    /// Built-in graph: petersen, heawood or mcgee.
    #[arg(long, conflicts_with = "n")]
    pub fixture: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub p0: f64,
    #[arg(long, default_value_t = 0.02)]
    pub p: f64,
    /// Label steps N; defaults to ceil(5 / p), or 0 when p = 0.
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    Initial,
    Step,
    Independence,
    Cor41,
    Cor42,
    Cor43,
    Cor44,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub check: Check,
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    #[arg(long = "i", default_value_t = 1)]
    pub i: u32,
    #[arg(long, default_value_t = 0.2)]
    pub p0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,
    /// Samples for Monte-Carlo runs.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sample even when exact enumeration fits in the budget.
    #[arg(long)]
    pub monte_carlo: bool,
}
