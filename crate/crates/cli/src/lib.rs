//! The `qs` command line.
//!
//! Exit codes: 0 success, 1 invalid input (bad flags, unreadable or
//! malformed input files, a fit that failed its convergence check), 2
//! anything else. Failures print one `qs: error: ...` line on stderr.

pub mod data;
pub mod fit;
mod metrics;
mod report;
mod serve;
mod simulate;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use data::{load_fit_data, DataOptions, FitData, ModelKind};
pub use fit::{build_model, fit, FitOutput, MAX_RHAT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

/// Marks an error as the caller's fault; mapped to exit code 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub(crate) fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

/// Reads a user-supplied file; a failure is invalid input.
pub(crate) fn read_input(path: &std::path::Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "qs", version, about = "Quadratic survey platform")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(serve::ServeArgs),
    /// Generate synthetic session logs.
    Simulate(simulate::SimulateArgs),
    /// Compute behavioural metrics over a directory of session logs.
    Metrics(metrics::MetricsArgs),
    /// Fit a Bayesian model and write draws and summaries.
    Fit(fit::FitArgs),
    /// Posterior contrasts between two quantities of a fit.
    Report(report::ReportArgs),
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("qs: {}", first.trim());
            return EXIT_INVALID;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = if e.chain().any(|c| c.is::<Invalid>()) { EXIT_INVALID } else { EXIT_INTERNAL };
            eprintln!("qs: error: {}", one_line(&e));
            code
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    let text = e.chain().map(|c| c.to_string()).collect::<Vec<_>>().join(": ");
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Serve(a) => serve::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Metrics(a) => metrics::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Report(a) => report::run(a),
    }
}

pub(crate) fn ensure_dir(path: &PathBuf) -> anyhow::Result<()> {
    if path.exists() && !path.is_dir() {
        return Err(invalid(format!("{} exists and is not a directory", path.display())));
    }
    std::fs::create_dir_all(path).map_err(|e| anyhow::anyhow!("creating {}: {e}", path.display()))
}

/// Writes to stdout; a reader that went away (e.g. `| head`) is not an error.
pub(crate) fn print_stdout(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
