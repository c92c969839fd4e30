//! `phasecert`: profiles, admissible switches, routed/direct certificates,
//! coupling simulations and the sharpness family from one JSON config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use phasecert_core::Error;
use tracing_subscriber::EnvFilter;

use commands::SimMode;
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "phasecert",
    version,
    about = "Phase-aware Wasserstein certificates for diffusion samplers"
)]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "PHASECERT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    config: PathBuf,
    /// Override a field by dotted path, e.g. `--set schedule.beta=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replace the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; stdout when neither this nor `output.csv` is set.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON destination, overriding `output.json`.
    #[arg(long)]
    json: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config, &self.overrides, self.seed)?;
        if self.csv.is_some() {
            cfg.output.csv = self.csv.clone();
        }
        if self.json.is_some() {
            cfg.output.json = self.json.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the radial lower envelope with its margin and load.
    Profile(Common),
    /// List admissible switches and the threshold bracket.
    Admissible(Common),
    /// Routed and direct bounds at every admissible switch.
    Certify(Common),
    /// Run a coupling or the end-to-end sampler.
    Simulate {
        #[command(subcommand)]
        mode: Mode,
    },
    /// Exact costs of the two-point sharpness family.
    Sharpness(Common),
    /// Check a config, or an output document against its schema.
    Validate {
        file: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Subcommand)]
enum Mode {
    Synchronous(Common),
    Reflection(Common),
    EndToEnd(Common),
}

/// 2 for bad configs, 3 for numerical failures, 4 for infeasible requests.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() || err.downcast_ref::<clap::Error>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidInput(_)
            | Error::OutOfRange { .. }
            | Error::NotGridAligned { .. }
            | Error::AtKink { .. }
            | Error::DegenerateNoise { .. },
        ) => 2,
        Some(Error::EmptyWindow { .. } | Error::Inadmissible { .. } | Error::NoAdmissibleSwitch { .. }) => 4,
        Some(
            Error::QuadratureFailed { .. }
            | Error::DivergentIntegral { .. }
            | Error::Explosion { .. }
            | Error::UnsupportedTransport(_),
        ) => 3,
        None => 1,
    }
}

/// A reader closing stdout early (`| head`) is not a failure.
fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || e.downcast_ref::<csv::Error>().is_some_and(
                |c| matches!(c.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe),
            )
    })
}

/// Error text with long margin tables summarized.
fn describe(err: &anyhow::Error) -> String {
    match err.downcast_ref::<Error>() {
        Some(Error::NoAdmissibleSwitch { margins }) => {
            let best = margins.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((s0, m)) => format!(
                    "no admissible grid-aligned switch among {} candidates; largest window margin {m} at s0 = {s0}",
                    margins.len()
                ),
                None => "no admissible grid-aligned switch: the switch grid is empty".into(),
            }
        }
        _ => format!("{err:#}"),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Profile(c) => commands::profile(&c.load()?),
        Command::Admissible(c) => commands::admissible(&c.load()?),
        Command::Certify(c) => commands::certify(&c.load()?),
        Command::Simulate { mode } => match mode {
            Mode::Synchronous(c) => commands::simulate(&c.load()?, SimMode::Synchronous),
            Mode::Reflection(c) => commands::simulate(&c.load()?, SimMode::Reflection),
            Mode::EndToEnd(c) => commands::simulate(&c.load()?, SimMode::EndToEnd),
        },
        Command::Sharpness(c) => commands::sharpness(&c.load()?),
        Command::Validate { file, overrides } => commands::validate(&file, &overrides),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
