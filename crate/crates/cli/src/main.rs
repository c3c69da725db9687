//! `swingsim`: run frequency-dynamics scenarios, region maps, phase traces
//! and inertia statistics from JSON config files.

mod bundled;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use swingsim::config::CONFIG_KEYS;
use swingsim::par::Execution;

use run::{CliError, RunOptions, Source};

#[derive(Debug, Parser)]
#[command(name = "swingsim", version, about = "Multi-area power-system frequency dynamics")]
struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file, or the name of a bundled config (see `list-configs`).
    config: String,
    /// Override a config key, e.g. `--set grid.areas.0.h=3`. Repeatable;
    /// values are read as JSON, falling back to a plain string.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, replacing `output.directory`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Evaluate independent work items on one thread.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn split(self) -> (Source, RunOptions) {
        let exec = if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        };
        (
            Source::resolve(&self.config),
            RunOptions {
                overrides: self.overrides,
                out: self.out,
                exec,
            },
        )
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-domain simulation of the `scenario` section.
    Simulate(RunArgs),
    /// Region-of-attraction map of the `region` section.
    Region(RunArgs),
    /// Phase-plane trace of the `phase` section.
    Phase(RunArgs),
    /// Inertia statistics of the `analytics` section.
    Inertia(RunArgs),
    /// List the bundled configs.
    ListConfigs,
    /// Write the bundled configs and fixtures into a directory.
    ExportConfigs {
        dir: PathBuf,
    },
}

fn config_keys_help() -> String {
    let width = CONFIG_KEYS.iter().map(|k| k.0.len()).max().unwrap_or(0);
    let mut text = String::from("Config keys (unit, meaning):\n");
    for (key, unit, what) in CONFIG_KEYS {
        text.push_str(&format!("  {key:width$}  [{unit}]  {what}\n"));
    }
    text.push_str("\nExit codes: 0 success, 2 config error, 3 runtime error.");
    text
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (_, 0) => "warn",
        (_, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => {
            let (source, opts) = args.split();
            run::run_simulate(source, &opts).map(drop)
        }
        Command::Region(args) => {
            let (source, opts) = args.split();
            run::run_region(source, &opts).map(drop)
        }
        Command::Phase(args) => {
            let (source, opts) = args.split();
            run::run_phase(source, &opts).map(drop)
        }
        Command::Inertia(args) => {
            let (source, opts) = args.split();
            run::run_inertia(source, &opts).map(drop)
        }
        Command::ListConfigs => {
            let width = bundled::CONFIGS.iter().map(|c| c.0.len()).max().unwrap_or(0);
            for (name, what, _) in bundled::CONFIGS {
                println!("{name:width$}  {what}");
            }
            Ok(())
        }
        Command::ExportConfigs { dir } => {
            for path in run::export_bundled(&dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().after_help(config_keys_help()).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    init_logging(cli.verbose, cli.quiet);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
