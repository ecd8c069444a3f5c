mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mimosim_core::waveform::BandPreset;

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] mimosim_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mimosim", version, about = "Ultrasonic MIMO array simulation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    band: Option<Band>,
    /// flat, conamara-like, or a CSV file with freq_hz,mag_db[,phase_rad].
    #[arg(long, global = true)]
    response: Option<String>,
    /// Print a single JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Band {
    Wideband,
    Narrowband,
}

impl From<Band> for BandPreset {
    fn from(b: Band) -> Self {
        match b {
            Band::Wideband => BandPreset::Wideband,
            Band::Narrowband => BandPreset::Narrowband,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the multisine waveform set.
    Gen,
    /// Channel separation matrices, ideal and through the transducer response.
    Separation,
    /// Delay-and-sum image of the configured scene.
    Image,
    /// Single-emitter vs MIMO images and metrics.
    Compare,
    /// Link throughput needed by a number of microphones.
    Throughput {
        #[arg(long)]
        mics: u64,
        #[arg(long, default_value_t = mimosim_core::stream::DEFAULT_PDM_RATE)]
        pdm_rate: u64,
    },
    /// Microphones a link bandwidth can carry.
    MaxMics {
        /// Bytes per second; accepts forms like 40e6.
        #[arg(long, value_parser = parse_rate)]
        bw: u64,
        #[arg(long, default_value_t = mimosim_core::stream::DEFAULT_PDM_RATE)]
        pdm_rate: u64,
    },
    /// Simulate the acquisition link with host back-pressure.
    Streamsim {
        /// Write a per-event CSV log.
        #[arg(long)]
        log: bool,
    },
}

fn parse_rate(s: &str) -> Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(v > 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64) {
        return Err(format!("`{s}` must be a positive whole number of bytes per second"));
    }
    Ok(v as u64)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let name = match &cli.command {
        Command::Throughput { mics, pdm_rate } => return commands::throughput(*mics, *pdm_rate, g.json),
        Command::MaxMics { bw, pdm_rate } => return commands::max_mics(*bw, *pdm_rate, g.json),
        Command::Gen => "gen",
        Command::Separation => "separation",
        Command::Image => "image",
        Command::Compare => "compare",
        Command::Streamsim { .. } => "streamsim",
    };
    let base = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        seed: g.seed,
        out: g.out,
        band: g.band.map(Into::into),
        response: g.response,
    };
    let cfg = base.resolve(name, overrides)?;
    match cli.command {
        Command::Gen => commands::gen(&cfg, g.json),
        Command::Separation => commands::separation(&cfg, g.json),
        Command::Image => commands::image(&cfg, g.json),
        Command::Compare => commands::compare(&cfg, g.json),
        Command::Streamsim { log } => commands::streamsim(&cfg, log, g.json),
        Command::Throughput { .. } | Command::MaxMics { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
