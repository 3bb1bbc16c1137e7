use std::path::PathBuf;

use clap::{Parser, Subcommand};

use peaklab_cli::{execute, ExperimentKind, Invocation};

#[derive(Parser, Debug)]
#[command(name = "peaklab", version, about = "Least-energy solutions and their concentration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; `PEAKLAB_OUT` takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent exponents or probes.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve each exponent independently.
    Solve(Common),
    /// Continuation sweep over the exponent schedule.
    Sweep(Common),
    /// Green function and modified Green function at the source point.
    Green(Common),
    /// Robin map on a probe lattice and its critical points.
    Robin(Common),
    /// Boundary identity along the schedule.
    Pohozaev(Common),
    /// Concentration diagnostics along the schedule.
    Concentration(Common),
    /// Every diagnostic with a summary.
    Report(Common),
}

fn main() {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Solve(c) => (ExperimentKind::Solve, c),
        Command::Sweep(c) => (ExperimentKind::Sweep, c),
        Command::Green(c) => (ExperimentKind::Green, c),
        Command::Robin(c) => (ExperimentKind::Robin, c),
        Command::Pohozaev(c) => (ExperimentKind::Pohozaev, c),
        Command::Concentration(c) => (ExperimentKind::Concentration, c),
        Command::Report(c) => (ExperimentKind::FullReport, c),
    };
    let level = if common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = execute(&Invocation {
        kind,
        config: common.config,
        out: common.out,
        jobs: common.jobs,
    });
    std::process::exit(code);
}
