//! Command-line front end.
//!
//! Settings are taken from the config file, then `--set` overrides in order,
//! then `--out` for the output directory.

pub mod config;
pub mod execute;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, Experiment, LoadedConfig, RunConfig};
pub use execute::{execute, exit_code, EXIT_CONFIG, EXIT_INDETERMINATE, EXIT_IO, EXIT_NUMERICAL, EXIT_OK};
pub use manifest::{Manifest, OutputDir, MANIFEST_NAME};

#[derive(Debug, Parser)]
#[command(name = "quenchlab", version, about = "Quenching experiments for coupled nonlocal diffusion systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and report quenching.
    Run(Common),
    /// Probe the flow from data one for a stationary solution.
    Stationary(Common),
    /// Map stationary solutions over a (lambda, mu) grid.
    Region(Common),
    /// Shoot over the data split delta.
    Shoot(Common),
    /// Scan parameters and tabulate quench verdicts.
    Scan(Common),
    /// Fit quenching rates and compare with the predicted laws.
    Rates(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override a config value by dotted key path, e.g. `params.p=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Also write the operator weights as CSV.
    #[arg(long)]
    pub dump_operator: bool,
}

impl Command {
    fn split(&self) -> (Experiment, &Common) {
        match self {
            Command::Run(c) => (Experiment::Run, c),
            Command::Stationary(c) => (Experiment::Stationary, c),
            Command::Region(c) => (Experiment::Region, c),
            Command::Shoot(c) => (Experiment::Shoot, c),
            Command::Scan(c) => (Experiment::Scan, c),
            Command::Rates(c) => (Experiment::Rates, c),
        }
    }
}

/// Parses arguments, runs the experiment and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (kind, common) = cli.command.split();
    let loaded = match parse_config(&common.config, &common.set, kind) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let Some(root) = common.out.clone().or_else(|| loaded.config.output.clone()) else {
        eprintln!("error: no output directory (use --out or `output`)");
        return EXIT_CONFIG;
    };
    if common.threads == Some(0) {
        eprintln!("error: --threads must be >= 1");
        return EXIT_CONFIG;
    }
    let out = match OutputDir::create(&root) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_IO;
        }
    };
    match pool.install(|| execute(&loaded, out, common.dump_operator)) {
        Ok((manifest, code)) => {
            if let Some(msg) = &manifest.error {
                eprintln!("{}: {msg}", manifest.status);
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
