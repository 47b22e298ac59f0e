//! `pcap`: classify, measure and sweep model manifolds from JSON spec files.
//!
//! Single results print as one JSON object (or one CSV row with
//! `--format csv`); sweeps and energy schedules print CSV tables. Exit codes
//! for `classify` are 0 Parabolic, 1 Hyperbolic, 2 Inconclusive; `energy`
//! exits 0 iff the energies decay. Errors exit 3 (bad input) or 4
//! (numerical failure).

pub mod commands;
pub mod error;
pub mod record;
pub mod spec;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{run, Output};
pub use error::{CliError, EXIT_INPUT, EXIT_NUMERICAL};
pub use record::{ResultRecord, Value};

/// Environment variable overriding the quadrature relative tolerance.
pub const RELTOL_ENV: &str = "PCAP_RELTOL";

#[derive(Debug, Parser)]
#[command(
    name = "pcap",
    version,
    about = "p-capacity and p-parabolicity of model manifolds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide p-parabolicity (exit 0 Parabolic, 1 Hyperbolic, 2 Inconclusive).
    Classify(ClassifyArgs),
    /// Capacity of the core inside the ball of radius R.
    Capacity(CapacityArgs),
    /// Classify over a grid of exponents and estimate the critical p.
    Sweep(SweepArgs),
    /// Pulled-back cutoff energies of a submersion (exit 0 iff they decay).
    Energy(EnergyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Manifold spec file (JSON).
    pub spec: PathBuf,
    /// Quadrature relative tolerance [default: PCAP_RELTOL, then the spec's options.rel_tol, then 1e-10].
    #[arg(long = "rel-tol")]
    pub rel_tol: Option<f64>,
    /// Record wall time in the output instead of on standard error.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CriterionArgs {
    /// Upper end of the criterion integral [default: options.T_max, then 1e6].
    #[arg(long = "t-max")]
    pub t_max: Option<f64>,
    /// Tail-exponent margin around -1 [default: options.margin, then 0.05].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Write (t, log g(t)) samples as CSV to this path.
    #[arg(long = "log-data")]
    pub log_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub criterion: CriterionArgs,
    /// Exponent p > 1.
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Flux,
    Variational,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Exponent p > 1.
    #[arg(long)]
    pub p: f64,
    /// Outer radius, larger than the inner radius.
    #[arg(long = "R")]
    pub r: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Flux)]
    pub method: MethodArg,
    /// Variational grid size in nodes [default: options.grid_size, then 2000].
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub criterion: CriterionArgs,
    /// Exponent grid `start:stop:step`, stop included.
    #[arg(long = "p-grid", default_value = "1.5:6:0.5")]
    pub p_grid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    /// Capacity-optimal profile of the base on [j, R(j)].
    Optimal,
    /// ln(R/t) / ln(R/j).
    Log,
}

#[derive(Debug, Clone, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub criterion: CriterionArgs,
    /// Exponent p > 1.
    #[arg(long)]
    pub p: f64,
    /// Comma-separated increasing cutoff parameters j >= 2.
    #[arg(long)]
    pub schedule: String,
    #[arg(long, value_enum, default_value_t = ShapeArg::Optimal)]
    pub shape: ShapeArg,
    /// Outer radius exponent: R(j) = j^k.
    #[arg(long = "outer-power", default_value_t = 2.0)]
    pub outer_power: f64,
}
