//! The `poolea` command: pool server, native island, churn simulator and
//! log analyzer.

pub mod analyze;
pub mod config;
pub mod island;
pub mod server;
pub mod simulate;

use std::ffi::OsString;
use std::io::Write;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use config::{Cli, Command, ConfigFile};

/// Parses `args` and runs the subcommand. Usage errors exit with 2, every
/// other failure with 1 after a one-line diagnostic.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Writes one line to stdout. A closed pipe is not an error.
pub(crate) fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Serve(args) => server::run(args.or(file.serve).resolve()?),
        Command::Island(args) => {
            let config = args.or(file.island).resolve()?;
            let output = island::run(config.clone())?;
            island::write_output(&output, &config)
        }
        Command::Simulate(args) => {
            let config = args.or(file.simulate).resolve()?;
            simulate::run(&config)?;
            Ok(())
        }
        Command::Analyze(args) => {
            let config = args.or(file.analyze).resolve()?;
            let summary = analyze::run(&config)?;
            print_stdout(&serde_json::to_string_pretty(&summary)?)
        }
    }
}
