//! Batch front end for `fracshape-core`: JSON run configurations, file formats and
//! command dispatch.
//!
//! ```text
//! fracshape <command> --config <file.json> --out <dir> [--threads N]
//! ```
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input, 3 non-convergence,
//! 4 enumeration or size guard.

pub mod config;
pub mod error;
pub mod io;
pub mod run;

use std::path::{Path, PathBuf};

use clap::Parser;

pub use config::{parse_config, Command, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fracshape", version, about = "Fractional p-Laplacian solvers and shape optimisation")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for the nonlocal sums (default: all cores).
    #[arg(long, env = "FRACSHAPE_THREADS")]
    pub threads: Option<usize>,
}

/// Runs the parsed command line and returns the exit code, printing failures as
/// `ERROR <code>: <message>` on stderr.
pub fn main_with(cli: Cli) -> i32 {
    match try_main(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.line());
            e.code()
        }
    }
}

fn try_main(cli: &Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation(format!("cannot start {n} threads: {e}")))?;
    }
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", cli.config.display())))?;
    let dir = cli.config.parent().unwrap_or(Path::new("."));
    run::execute(cli.command, &text, dir, &cli.out)
}
