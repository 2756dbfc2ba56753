//! Command-line front end: strict JSON configs, runs with CSV/JSON output,
//! smallness checks, self-verification and parameter sweeps.

pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ekman", version, about = "Damped inhomogeneous Euler flows on the 2-torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration, writing records.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the smallness conditions for the initial data.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the numerical self-checks.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: verify::Level,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run one simulation per value of a dotted config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { commands::EXIT_CONFIG } else { 0 };
        }
    };
    match cli.command {
        Command::Run { config, out } => commands::cmd_run(&config, &out),
        Command::Check { config } => commands::cmd_check(&config),
        Command::Verify {
            level,
            inject_fault,
        } => verify::cmd_verify(level, inject_fault),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => commands::cmd_sweep(&config, &param, &values, &out),
    }
}
