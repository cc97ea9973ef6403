use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use divhjb::cli::{self, EXIT_CONFIG};
use divhjb::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "divhjb", version, about = "Optimal dividend value functions for the Cramér–Lundberg model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (created if missing)
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    /// Random seed; overrides `simulate.seed`
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the HJB ODE for one initial slope
    Solve(Common),
    /// Shoot for the initial slope
    Search(Common),
    /// Compare a solution with the large-reserve asymptotics
    Asymptotics(Common),
    /// Monte Carlo value of a policy
    Simulate(Common),
    /// Reproduce the three reference tables
    Tables(Common),
}

type Runner = fn(&RunConfig, &Common) -> divhjb::Result<cli::Outcome>;

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (common, run): (&Common, Runner) = match &args.command {
        Command::Solve(c) => (c, |cfg, c| cli::cmd_solve(cfg, &c.out)),
        Command::Search(c) => (c, |cfg, c| cli::cmd_search(cfg, &c.out)),
        Command::Asymptotics(c) => (c, |cfg, c| cli::cmd_asymptotics(cfg, &c.out)),
        Command::Simulate(c) => (c, |cfg, c| cli::cmd_simulate(cfg, &c.out, c.seed)),
        Command::Tables(c) => (c, |cfg, c| cli::cmd_tables(cfg, &c.out)),
    };
    let cfg = match RunConfig::load(&common.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cfg, common) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
