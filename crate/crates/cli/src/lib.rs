//! Command-line front end for `avrel-core`.
//!
//! Every command is a pure function of its inputs and options: outputs are
//! written under `--out`, seeded randomness defaults to `--seed 0`, and
//! re-running a command reproduces its files byte for byte.
//!
//! JSON artifacts are archives: they keep full binary64 precision so that
//! they can be fed back into later commands. CSV tables and console
//! summaries print numbers with 6 significant digits.

pub mod commands;
pub mod error;
pub mod format;
pub mod io;

use std::path::PathBuf;

use avrel_core::ParametricFamily;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "avrel", version, about = "Reliability analysis of window-observed recurrent events with time-varying exposure")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for bootstrap and simulation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and validate a fleet archive from the canonical CSVs.
    Ingest(IngestArgs),
    /// Write a fleet archive back out as canonical CSVs.
    Export(ExportArgs),
    /// Fit baselines and compare them by AIC.
    Fit(FitArgs),
    /// Fractional-random-weight bootstrap of the spline estimator.
    Bootstrap(BootstrapArgs),
    /// Pointwise and simultaneous bands, with an optional parametric check.
    Scb(ScbArgs),
    /// Gamma frailty fit and likelihood-ratio test for heterogeneity.
    Frailty(FrailtyArgs),
    /// Monte Carlo scenario study.
    Simulate(SimulateArgs),
    /// Expected versus observed cumulative event counts.
    Expected(ExpectedArgs),
}

/// Baseline choice on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    MusaOkumoto,
    Gompertz,
    Weibull,
    Spline,
    /// All three parametric families plus the AIC-selected spline.
    Auto,
}

impl FamilyArg {
    pub fn parametric(self) -> Option<ParametricFamily> {
        match self {
            FamilyArg::MusaOkumoto => Some(ParametricFamily::MusaOkumoto),
            FamilyArg::Gompertz => Some(ParametricFamily::Gompertz),
            FamilyArg::Weibull => Some(ParametricFamily::Weibull),
            FamilyArg::Spline | FamilyArg::Auto => None,
        }
    }
}

/// `auto` (AIC selection over 1..=10 interior knots) or a fixed count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knots {
    Auto,
    Fixed(usize),
}

impl Knots {
    pub fn candidates(self) -> Vec<usize> {
        match self {
            Knots::Auto => avrel_core::estimation::DEFAULT_CANDIDATE_KNOTS.to_vec(),
            Knots::Fixed(k) => vec![k],
        }
    }
}

fn parse_knots(s: &str) -> Result<Knots, String> {
    if s == "auto" {
        return Ok(Knots::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(Knots::Fixed(k)),
        _ => Err(format!("expected 'auto' or a positive integer, got '{s}'")),
    }
}

/// What `--freeze-b` pins the per-replicate knot count to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    /// The AIC choice of the full-data point estimate.
    PointEstimate,
    Fixed(usize),
}

fn parse_freeze(s: &str) -> Result<Freeze, String> {
    if s == "point" {
        return Ok(Freeze::PointEstimate);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(Freeze::Fixed(k)),
        _ => Err(format!("expected 'point' or a positive integer, got '{s}'")),
    }
}

fn parse_probability(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(p) if p > 0.0 && p < 1.0 => Ok(p),
        _ => Err(format!("expected a number in (0, 1), got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub months: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub exposure: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Fleet archive written by `ingest`.
    #[arg(long)]
    pub fleet: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub fleet: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub family: FamilyArg,
    #[arg(long, value_parser = parse_knots, default_value = "auto")]
    pub knots: Knots,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub fleet: PathBuf,
    /// Number of bootstrap replicates.
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, value_parser = parse_knots, default_value = "auto")]
    pub knots: Knots,
    /// Skip per-replicate knot selection: bare flag (or `point`) reuses the
    /// point estimate's knot count, an integer fixes it.
    #[arg(long, value_parser = parse_freeze, num_args = 0..=1, default_missing_value = "point")]
    pub freeze_b: Option<Freeze>,
}

#[derive(Debug, Args)]
pub struct ScbArgs {
    #[arg(long)]
    pub fleet: PathBuf,
    /// Reuse an ensemble written by `bootstrap` instead of resampling.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    #[arg(long = "B", default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, value_parser = parse_knots, default_value = "auto")]
    pub knots: Knots,
    /// As for `bootstrap`.
    #[arg(long, value_parser = parse_freeze, num_args = 0..=1, default_missing_value = "point")]
    pub freeze_b: Option<Freeze>,
    /// Level of the simultaneous band.
    #[arg(long, value_parser = parse_probability, default_value = "0.05")]
    pub alpha: f64,
    /// Level of the pointwise band (defaults to --alpha).
    #[arg(long, value_parser = parse_probability)]
    pub alpha_p: Option<f64>,
    /// Band window start (default: first event day).
    #[arg(long)]
    pub tl: Option<f64>,
    /// Band window end (default: last event day).
    #[arg(long)]
    pub tu: Option<f64>,
    /// Parametric family to test against the band; `auto` picks the
    /// lowest-AIC parametric family.
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
}

#[derive(Debug, Args)]
pub struct FrailtyArgs {
    #[arg(long)]
    pub fleet: PathBuf,
    /// Parametric baseline; `auto` picks the lowest-AIC parametric family.
    #[arg(long, value_enum, default_value = "auto")]
    pub family: FamilyArg,
    /// Use the ½χ²₀ + ½χ²₁ boundary mixture for the p-value.
    #[arg(long)]
    pub boundary_mix: bool,
    #[arg(long, value_parser = parse_probability, default_value = "0.05")]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Canonical scenario 1, 2 or 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: u8,
    /// Units per simulated fleet; several sizes may be given comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub repeats: usize,
    #[arg(long = "B", default_value_t = 500)]
    pub replicates: usize,
    /// Parametric family checked against each band.
    #[arg(long, value_enum, default_value = "gompertz")]
    pub family: FamilyArg,
    #[arg(long, value_parser = parse_knots, default_value = "auto")]
    pub knots: Knots,
    #[arg(long, value_parser = parse_probability, default_value = "0.05")]
    pub alpha: f64,
    /// Exposure pool archive (default: the built-in synthetic pool).
    #[arg(long)]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub tl: Option<f64>,
    #[arg(long)]
    pub tu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExpectedArgs {
    #[arg(long)]
    pub fleet: PathBuf,
    /// Fit archive written by `fit`; when absent the model is fitted here.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "spline")]
    pub family: FamilyArg,
    #[arg(long, value_parser = parse_knots, default_value = "auto")]
    pub knots: Knots,
}

/// Runs a parsed command, writing its report to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn std::io::Write) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    commands::dispatch(cli, stdout)
}
