use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::ModelSpec;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "betalm", version, about = "Robust β-score LM tests for heteroscedasticity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Breusch–Pagan β and Koenker β tests at the given tuning parameters.
    Test(TestArgs),
    /// Both statistics over a β grid, with optional plot data.
    Scan(ScanArgs),
    /// Asymptotic relative efficiency curve.
    Are(AreArgs),
    /// Second-order influence curves and gross-error sensitivity.
    Influence(InfluenceArgs),
    /// Local power under Pitman alternatives, optionally contaminated.
    Power(PowerArgs),
    /// Monte Carlo size and power from a scenario file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub response: String,
    /// Regressors (an intercept is always added).
    #[arg(long, value_delimiter = ',', required = true)]
    pub x: Vec<String>,
    /// Heteroscedasticity regressors; defaults to the --x columns.
    #[arg(long, value_delimiter = ',', conflicts_with = "white")]
    pub z: Vec<String>,
    /// Use the regressors, their squares and cross-products as Z.
    #[arg(long)]
    pub white: bool,
    /// 1-based data rows to leave out.
    #[arg(long, value_delimiter = ',')]
    pub drop_rows: Vec<usize>,
}

impl DataArgs {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            response: self.response.clone(),
            x: self.x.clone(),
            z: self.z.clone(),
            white: self.white,
            drop_rows: self.drop_rows.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub beta: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `lo:hi:step`
    #[arg(long, default_value = "0:0.75:0.05")]
    pub beta_grid: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Fit every grid point from OLS instead of the previous point.
    #[arg(long)]
    pub cold_start: bool,
    /// Also write `beta,bp_stat,koenker_stat,threshold` to this file.
    #[arg(long)]
    pub plot_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct AreArgs {
    #[arg(long, default_value = "0:0.75:0.01")]
    pub beta_grid: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct InfluenceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub beta: f64,
    /// 1-based observations to trace; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub obs: Vec<usize>,
    /// `lo:hi:step` in response units; default ±8σ around each fitted value.
    #[arg(long, allow_hyphen_values = true)]
    pub y_grid: Option<String>,
    /// Null variance; taken from the fit at --beta when omitted.
    #[arg(long, requires = "coef")]
    pub sigma2: Option<f64>,
    /// Null coefficients, intercept first.
    #[arg(long, value_delimiter = ',', requires = "sigma2")]
    pub coef: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Local alternative direction, one entry per Z column.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub delta: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Contamination fraction.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Contamination point as fitted value plus this many σ.
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub contam_offset: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `key = value` scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Config(format!("grid `{spec}` is not lo:hi:step"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if count > 1_000_000 {
        return Err(CliError::Config(format!("grid `{spec}` has {count} points")));
    }
    // snap to 12 decimals so 0.05·3 reads back as 0.15
    Ok((0..count)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}
