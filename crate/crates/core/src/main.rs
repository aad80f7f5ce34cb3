use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use persuasion_lab::harness::{self, ExitStatus, Overrides};

#[derive(Parser)]
#[command(name = "persuasion-lab", version, about = "Sequential persuasion experiments and proximal off-policy evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Best one-shot signaling policy in the environment's policy set.
    SolveBp(Common),
    /// Simulate and persist a behavioral dataset.
    GenData(Common),
    /// Estimate each evaluation strategy's value.
    Evaluate(Common),
    /// Check the population-level matrix identities.
    CheckIdentities(Common),
    /// Rank a meta-policy family by estimated value.
    SearchPolicy(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(ExitStatus::Parse.code() as u8) } else { ExitCode::SUCCESS };
        }
    };
    let (name, c) = match &cli.command {
        Command::SolveBp(c) => ("solve-bp", c),
        Command::GenData(c) => ("gen-data", c),
        Command::Evaluate(c) => ("evaluate", c),
        Command::CheckIdentities(c) => ("check-identities", c),
        Command::SearchPolicy(c) => ("search-policy", c),
    };
    let o = Overrides { out: c.out.clone(), seed: c.seed };
    match harness::run(name, &c.config, &o) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            println!("report: {}", outcome.run_dir.display());
            if outcome.status != ExitStatus::Success {
                eprintln!("exit status {} ({:?})", outcome.status.code(), outcome.status);
            }
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitStatus::of_error(&e).code() as u8)
        }
    }
}
