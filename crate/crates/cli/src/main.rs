//! `sdid` — effect modification from pre-post data, no control group.
//!
//! Reports go to standard output (or `--out`); diagnostics and errors go
//! to standard error. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 numerical failure.

mod cli;
mod error;
mod io;
mod report;
mod run;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command, CommonArgs};
use error::CliError;
use report::Report;

fn main() {
    let parsed = Cli::try_parse().unwrap_or_else(|e| {
        // Help and version requests are successful exits.
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            std::process::exit(0);
        }
        eprint!("{e}");
        std::process::exit(1);
    });

    if let Err(err) = init_thread_pool() {
        eprintln!("error: {}", err.message());
        std::process::exit(err.exit_code());
    }

    let outcome = dispatch(&parsed.command);
    match outcome {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {}", err.message());
            std::process::exit(err.exit_code());
        }
    }
}

/// SDID_THREADS caps internal parallelism (bootstrap replicates and
/// Monte Carlo repetitions). Results never depend on the thread count.
fn init_thread_pool() -> Result<(), CliError> {
    match std::env::var("SDID_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let threads: usize = raw.parse().map_err(|_| {
                CliError::Usage(format!(
                    "SDID_THREADS must be a positive integer, got `{raw}`"
                ))
            })?;
            if threads == 0 {
                return Err(CliError::Usage(
                    "SDID_THREADS must be a positive integer, got `0`".to_string(),
                ));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let (report, common): (Report, &CommonArgs) = match command {
        Command::Estimate(args) => (run::run_estimate(args)?, &args.common),
        Command::Pretrends(args) => (run::run_pretrends_cmd(args)?, &args.common),
        Command::Simulate(args) => (run::run_simulate(args)?, &args.common),
        Command::Validate(args) => (run::run_validate(args)?, &args.common),
    };
    let rendered = report.render(common.format.into())?;
    match &common.out {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| CliError::Data(format!("cannot write `{}`: {e}", path.display())))?,
        None => print!("{rendered}"),
    }
    Ok(())
}
