//! Command-line front end: JSON configuration in, CSV and JSON results plus a
//! run manifest out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::schemas;
pub use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "tweezerlab", version, about = "Tweezer-lattice modeling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// JSON configuration, or the manifest of an earlier run to replay.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `seed=7` or `trap.power_mW=2.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "tweezerlab-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Plane-wave reflectance of a layered stack versus angle.
    Stack(Common),
    /// Focused-beam field above the stack.
    Field(Common),
    /// Axial trap potential and lattice sites.
    Potential(Common),
    /// Conveyor detuning profile and site displacement.
    Conveyor(Common),
    /// Langevin Monte Carlo of trap loading.
    McLoad(Common),
    /// Detected counts versus atom height.
    Imaging(Common),
    /// Synthetic fluorescence count histogram.
    SynthHist(Common),
    /// Composite-Gaussian fit of a count histogram.
    FitHistogram(Common),
    /// Ensemble fit of downward-transport counts.
    FitTransport(Common),
    /// Feedback-controlled array assembly.
    Assemble(Common),
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Self::Stack(c) => ("stack", c),
            Self::Field(c) => ("field", c),
            Self::Potential(c) => ("potential", c),
            Self::Conveyor(c) => ("conveyor", c),
            Self::McLoad(c) => ("mc-load", c),
            Self::Imaging(c) => ("imaging", c),
            Self::SynthHist(c) => ("synth-hist", c),
            Self::FitHistogram(c) => ("fit-histogram", c),
            Self::FitTransport(c) => ("fit-transport", c),
            Self::Assemble(c) => ("assemble", c),
        }
    }
}

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Compute(m) => write!(f, "computation failed: {m}"),
        }
    }
}

impl From<tweezerlab::Error> for CliError {
    fn from(e: tweezerlab::Error) -> Self {
        use tweezerlab::Error as E;
        match e {
            E::InvalidInput(_) | E::InvalidStack(_) | E::InvalidPlan(_) => Self::Config(e.to_string()),
            _ => Self::Compute(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

const THREADS_VAR: &str = "TWEEZERLAB_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Compute(format!("thread pool: {e}")))
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (name, common) = cli.command.split();
    match configure_threads().and_then(|_| execute(name, &common)) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(name: &'static str, common: &Common) -> CliResult<PathBuf> {
    let started = chrono::Utc::now();
    let mut inputs = Vec::new();
    let value = config::load(common.config.as_deref(), name, &mut inputs)?;
    let value = config::apply_overrides(value, &common.set)?;
    let mut out = output::Output::create(&common.out)?;
    let resolved = commands::dispatch(name, value, &mut out, &mut inputs)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: name.to_string(),
        config: resolved.config,
        seed: resolved.seed,
        inputs,
        started_utc: started.to_rfc3339(),
        finished_utc: chrono::Utc::now().to_rfc3339(),
        outputs: out.files().to_vec(),
    };
    out.write_manifest(&manifest)?;
    Ok(common.out.clone())
}
