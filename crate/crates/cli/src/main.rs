//! `psireco` command-line tool.
//!
//! Every subcommand reads a JSON scenario and writes JSON (or CSV with
//! `--format csv`) to stdout or `--out`. Exit status is 0 on success, 1 when
//! `validate` finds a failing comparison and 2 for configuration errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psireco::Route;

#[derive(Parser, Debug)]
#[command(name = "psireco", version, about = "Solve and cross-check the psi-recombination equation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Time horizon; overrides the scenario's `t`.
    #[arg(long, global = true)]
    pub t: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for Monte Carlo and route evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the ODE.
    Solve(SolveArgs),
    /// Iterated-integral recursion.
    Recursion(RecursionArgs),
    /// Matrix-exponential closed form.
    Closedform(ClosedFormArgs),
    /// Monte Carlo over the labelled partitioning process.
    Glpp(GlppArgs),
    /// Sample or estimate with the ancestral initiation graph.
    Aig(AigArgs),
    /// Run several routes and compare them pairwise.
    Validate(ValidateArgs),
    /// Measure how far psi and its bullet part are from the structural requirements.
    CheckAssumptions(CheckArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Output times (comma separated); emits a trajectory.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Fixed RK4 step.
    #[arg(long, conflicts_with = "rtol")]
    pub step: Option<f64>,
    /// Use adaptive Dormand-Prince with this relative (and absolute) tolerance.
    #[arg(long)]
    pub rtol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RecursionArgs {
    /// Comma list of 1-based sites starting with the active site, or "default".
    #[arg(long)]
    pub ordering: Option<String>,
    /// Quadrature intervals (even).
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    /// Double the grid until successive results agree within this TV distance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Truncation level; defaults to n - 1 (the full solution).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Run on psi itself instead of the bullet part followed by the mutation envelope.
    #[arg(long)]
    pub no_envelope: bool,
    /// Run even when psi violates the structural requirements.
    #[arg(long = "override")]
    pub override_assumption: bool,
}

#[derive(Args, Debug)]
pub struct ClosedFormArgs {
    #[arg(long)]
    pub ordering: Option<String>,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Labels {
    Clock,
    Yule,
    Flags,
}

#[derive(Args, Debug)]
pub struct GlppArgs {
    #[arg(long, default_value_t = 100_000)]
    pub replicates: u64,
    #[arg(long, value_enum, default_value_t = Labels::Clock)]
    pub labels: Labels,
    /// Write the events of replicate 0 as JSON lines.
    #[arg(long)]
    pub log_events: Option<PathBuf>,
    /// Simulate with per-block thinning instead of the pathwise construction.
    #[arg(long)]
    pub thinned: bool,
    #[arg(long = "override")]
    pub override_assumption: bool,
}

#[derive(Args, Debug)]
pub struct AigArgs {
    #[arg(long, default_value_t = 100_000)]
    pub replicates: u64,
    /// Write one sampled graph in Graphviz format.
    #[arg(long)]
    pub export_dot: Option<PathBuf>,
    /// Estimate the solution from the root types instead of describing one graph.
    #[arg(long)]
    pub estimate: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Routes to run (comma separated); all by default.
    #[arg(long, value_delimiter = ',')]
    pub routes: Option<Vec<Route>>,
    /// Routes whose skip counts as failure.
    #[arg(long, value_delimiter = ',')]
    pub require: Vec<Route>,
    #[arg(long, default_value_t = 100_000)]
    pub replicates: u64,
    #[arg(long, default_value_t = 512)]
    pub grid: usize,
    /// Record wall-clock seconds per route (makes the report nondeterministic).
    #[arg(long)]
    pub timings: bool,
    #[arg(long)]
    pub no_envelope: bool,
    #[arg(long = "override")]
    pub override_assumption: bool,
    /// TV tolerance between deterministic routes.
    #[arg(long)]
    pub det_tol: Option<f64>,
    /// Lower bound of the Monte Carlo tolerance.
    #[arg(long)]
    pub mc_floor: Option<f64>,
    /// Standard errors allowed for Monte Carlo comparisons.
    #[arg(long)]
    pub mc_sigmas: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.global, cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
