//! `vmsrom`: full-order snapshots, POD bases and reduced runs from a JSON config.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CompareConfig, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "vmsrom",
    version,
    about = "VMS Navier-Stokes snapshots and POD-Galerkin reduced models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and write the snapshot file.
    Fom(Opts),
    /// Build the reduced basis from the snapshot file.
    Pod(Opts),
    /// Run a reduced model and write its trajectory and error tables.
    Rom(Opts),
    /// Tabulate the errors of several reduced runs together.
    Compare(Opts),
}

#[derive(clap::Args)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    /// Run the non-consistent model even without supremizer modes.
    #[arg(long)]
    allow_singular: bool,
    /// Single-threaded execution.
    #[arg(long)]
    serial: bool,
}

fn serial() {
    vmsrom::sparse::set_serial_factorization();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
    {
        log::warn!("could not restrict the thread pool: {e}");
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, opts) = match &cli.command {
        Command::Fom(o) => ("fom", o),
        Command::Pod(o) => ("pod", o),
        Command::Rom(o) => ("rom", o),
        Command::Compare(o) => ("compare", o),
    };
    if name == "compare" {
        let (config, hash) = CompareConfig::load(&opts.config)?;
        if opts.serial {
            serial();
        }
        return commands::cmd_compare(&config, &hash, opts.allow_singular);
    }
    let (config, hash) = RunConfig::load(&opts.config, opts.allow_singular)?;
    if opts.serial || config.deterministic {
        serial();
    }
    match name {
        "fom" => commands::cmd_fom(&config, &hash),
        "pod" => commands::cmd_pod(&config, &hash),
        _ => commands::cmd_rom(&config, &hash, opts.allow_singular),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
