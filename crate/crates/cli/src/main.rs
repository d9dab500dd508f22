mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "voltreg", version, about = "Primal-dual voltage regulation on radial feeders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the primal-dual iteration on a feeder file.
    Solve(SolveArgs),
    /// Validate or generate a partition and report its reduced network.
    Cluster(ClusterArgs),
    /// Coupling-operation counts and per-iteration time on synthetic trees.
    Benchmark(BenchArgs),
    /// Feedback-mode runs with full and same-phase-only sensitivities.
    Compare(CompareArgs),
    /// Write a reference or synthetic feeder file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EngineKind {
    Central,
    Hier,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Linear,
    Feedback,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Family {
    /// Balanced d-ary tree partitioned automatically.
    Dary,
    /// K balanced laterals off the slack, one subtree each.
    Laterals,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Fixture {
    Line3,
    Tri2,
    Star8,
    Binary63,
    Tri2Extended,
    Dary,
    Laterals,
    Multiphase,
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "linear")]
    pub mode: ModeArg,
    /// Primal stepsize.
    #[arg(long, default_value_t = 3.5e-4)]
    pub eps: f64,
    /// Dual stepsize as a multiple of the primal one.
    #[arg(long, default_value_t = 1.0)]
    pub eps_dual_mult: f64,
    /// Dual regularization.
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    /// Lower voltage magnitude bound (p.u.).
    #[arg(long, default_value_t = 0.95)]
    pub vmin: f64,
    /// Upper voltage magnitude bound (p.u.).
    #[arg(long, default_value_t = 1.05)]
    pub vmax: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iters: usize,
    /// Stopping tolerance on the change of substation power.
    #[arg(long, default_value_t = 1e-6)]
    pub sigma: f64,
    /// Report zero for every wall-clock figure, for byte-identical output.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    #[arg(long, value_enum, default_value = "central")]
    pub engine: EngineKind,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// `file:<path>` or `auto:<k>`; defaults to the feeder's clusters, then
    /// an automatic partition of recommended size.
    #[arg(long)]
    pub partition: Option<String>,
    /// Start from a random feasible state drawn with this seed instead of
    /// the projected origin.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write every protocol message as JSON lines (hierarchical engine).
    #[arg(long)]
    pub log_messages: bool,
    /// Write branch flows of the final state from the nonlinear power flow.
    #[arg(long)]
    pub dump_flows: bool,
}

#[derive(Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// `file:<path>` or `auto:<k>`; defaults to the feeder's clusters.
    #[arg(long)]
    pub partition: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Numbers of non-slack nodes.
    #[arg(long, value_delimiter = ',', default_values_t = [256usize, 1024])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    /// Subtree counts: integers, `rec` for the recommended count, `quarter`
    /// for N/4.
    #[arg(long, value_delimiter = ',', default_values_t = ["1".to_string(), "8".into(), "rec".into(), "quarter".into()])]
    pub k: Vec<String>,
    #[arg(long, value_enum, default_value = "dary")]
    pub family: Family,
    /// Iterations timed per engine.
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Feeder file; defaults to the built-in twenty-node three-phase feeder.
    #[arg(long)]
    pub feeder: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub fixture: Fixture,
    /// Node count for generated families, slack included.
    #[arg(long, default_value_t = 64)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub branching: usize,
    /// Lateral count for the laterals family; defaults to the recommended
    /// subtree count.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Benchmark(a) => commands::benchmark(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Gen(a) => commands::gen(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
