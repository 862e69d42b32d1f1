use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use craft_cli::{cmd_compare, cmd_run, parse_seed_override, CliError, ErrorRecord, RunOptions};

#[derive(Parser)]
#[command(name = "craft", version, about = "Federated aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a TOML config (or a previous manifest.json).
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace a named seed, e.g. `--seed-override training=3`.
        #[arg(long = "seed-override", value_name = "NAME=VALUE")]
        seed_overrides: Vec<String>,
        #[arg(long)]
        quiet: bool,
    },
    /// Tabulate final metrics of finished runs and plot their mean accuracy.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed_overrides,
            quiet,
        } => {
            let opts = RunOptions {
                seed_overrides: seed_overrides
                    .iter()
                    .map(|s| parse_seed_override(s))
                    .collect::<Result<_, _>>()?,
                quiet,
            };
            cmd_run(&config, &out, &opts)?;
            if !quiet {
                eprintln!("wrote {}", out.display());
            }
        }
        Command::Compare { runs, out } => print!("{}", cmd_compare(&runs, &out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Ok(json) = serde_json::to_string(&ErrorRecord::from(&e)) {
                eprintln!("{json}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
