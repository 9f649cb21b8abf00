#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod io;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

/// Failure classes, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// A configured acceptance band or check was not met (exit 1).
    Band(String),
    /// Bad flags, unreadable or malformed input (exit 2).
    Input(String),
    /// Solver or I/O failure during a run (exit 3).
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Band(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Band(m) => write!(f, "acceptance check failed: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<obstacle_ridge::Error> for CliError {
    fn from(e: obstacle_ridge::Error) -> Self {
        use obstacle_ridge::Error as E;
        let root = match &e {
            E::Cell { source, .. } => source.as_ref(),
            other => other,
        };
        match root {
            E::Dimension(_) | E::Shape(_) | E::Param(_) | E::Geometry(_) | E::Format(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("OBSTACLE_RIDGE_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("OBSTACLE_RIDGE_THREADS={v:?} is not a thread count"))),
        _ => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(CliError::Input("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::RateStudy(a) => commands::study(&a, obstacle_ridge::Mode::Ridge),
        Command::ErmStudy(a) => commands::study(&a, obstacle_ridge::Mode::Erm),
        Command::Check(a) => commands::check(&a),
        Command::Illposed(a) => commands::illposed(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("obstacle-ridge: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
