//! Command-line front end of `oneshot-core`: device CSV in, JSON report out.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod hypothesis;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::Outcome;
pub use crate::error::{exit, CliError, Result};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "ONESHOT_THREADS";

/// Sizes the global rayon pool from `ONESHOT_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Some(raw) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Fit(a) => commands::fit_cmd(a),
        Command::Ci(a) => commands::ci_cmd(a),
        Command::Wald(a) => commands::wald_cmd(a),
        Command::Gof(a) => commands::gof_cmd(a),
        Command::Tune(a) => commands::tune_cmd(a),
        Command::Simulate(a) => commands::simulate_cmd(a),
    }
}

fn write_file(path: &std::path::Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Parses `argv`, runs the command, writes its outputs, and returns the
/// process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let result = configure_threads().and_then(|()| run(&cli)).and_then(|outcome| {
        let json = outcome.report.to_json(cli.raw);
        match &cli.out {
            Some(path) => write_file(path, &json)?,
            None => print!("{json}"),
        }
        if let (Some(csv), Command::Simulate(a)) = (&outcome.plot_csv, &cli.command) {
            if let Some(path) = &a.emit_plot_data {
                write_file(path, csv)?;
            }
        }
        Ok(outcome.non_convergence)
    });
    match result {
        Ok(None) => exit::OK,
        Ok(Some(msg)) => {
            eprintln!("oneshot: {msg}");
            exit::NON_CONVERGENCE
        }
        Err(e) => {
            eprintln!("oneshot: {e}");
            e.exit_code()
        }
    }
}
