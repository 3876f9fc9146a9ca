//! `spinsense`: build spin states, inspect their geometry and rotation sensitivity, and run
//! estimation experiments.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use spinsense_core::su2::Parametrization;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "spinsense",
    version,
    about = "Rotation sensing with spin states"
)]
struct Cli {
    /// Worker threads for parallel library calls.
    #[arg(long, global = true, env = "SPINSENSE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Construct a state and write its JSON.
    State(StateArgs),
    /// Majorana stars of a state (per photon-number block for two-mode states).
    Constellation(ConstellationArgs),
    /// Husimi function on a polar/azimuth grid, as CSV.
    Husimi(HusimiArgs),
    /// Quantum Fisher information matrix for a rotation.
    Qfi(QfiArgs),
    /// Quantum Cramér-Rao bound for a number of shots.
    Crb(CrbArgs),
    /// Monte Carlo estimation experiment from a config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Basis,
    Coherent,
    Noon,
    Cat,
    Balanced,
    King,
    TwoModeCoherent,
    #[value(name = "coherent+squeezed")]
    CoherentSqueezed,
}

#[derive(Debug, Args)]
pub struct StateArgs {
    pub family: Family,
    #[arg(long)]
    pub j: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub m: Option<f64>,
    #[arg(long)]
    pub polar: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub azimuth: Option<f64>,
    /// Cat-state parameter as `re[,im]`.
    #[arg(long, value_parser = parse_complex, allow_negative_numbers = true)]
    pub z: Option<Complex64>,
    /// Mode-a amplitude as `re[,im]`.
    #[arg(long, value_parser = parse_complex, allow_negative_numbers = true)]
    pub alpha: Option<Complex64>,
    /// Mode-b amplitude as `re[,im]`.
    #[arg(long, value_parser = parse_complex, allow_negative_numbers = true)]
    pub beta: Option<Complex64>,
    /// Squeezing strength as `re[,im]`.
    #[arg(long, value_parser = parse_complex, allow_negative_numbers = true)]
    pub xi: Option<Complex64>,
    /// Photon cutoff per mode; chosen from the truncation budget when omitted.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ConstellationArgs {
    pub state: PathBuf,
    /// Photon-number blocks to export for two-mode states.
    #[arg(long, value_delimiter = ',', default_value = "4,9,14,19")]
    pub blocks: Vec<usize>,
    /// Output format; defaults to CSV for `.csv` paths and JSON otherwise.
    #[arg(long)]
    pub format: Option<TableFormat>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HusimiArgs {
    pub state: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub n_polar: usize,
    #[arg(long, default_value_t = 128)]
    pub n_azimuth: usize,
    /// Photon-number block to use for two-mode states.
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RotationArgs {
    /// Rotation angle.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: f64,
    /// Polar angle of the rotation axis.
    #[arg(long)]
    pub cap_theta: f64,
    /// Azimuth of the rotation axis.
    #[arg(long, allow_negative_numbers = true)]
    pub cap_phi: f64,
    #[arg(long, value_enum, default_value_t = ParamArg::Spherical)]
    pub parametrization: ParamArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParamArg {
    Spherical,
    Cartesian,
    EulerZyz,
}

impl From<ParamArg> for Parametrization {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Spherical => Parametrization::Spherical,
            ParamArg::Cartesian => Parametrization::Cartesian,
            ParamArg::EulerZyz => Parametrization::EulerZyz,
        }
    }
}

#[derive(Debug, Args)]
pub struct QfiArgs {
    pub state: PathBuf,
    #[command(flatten)]
    pub rotation: RotationArgs,
    /// Also report the inverse (or the pseudoinverse when singular).
    #[arg(long)]
    pub inverse: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrbArgs {
    pub state: PathBuf,
    #[command(flatten)]
    pub rotation: RotationArgs,
    #[arg(long, default_value_t = 1)]
    pub shots: usize,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Overrides the config's output path.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected `re` or `re,im`, got `{s}`")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::State(a) => commands::state(&a),
        Command::Constellation(a) => commands::constellation(&a),
        Command::Husimi(a) => commands::husimi(&a),
        Command::Qfi(a) => commands::qfi(&a),
        Command::Crb(a) => commands::crb(&a),
        Command::Simulate(a) => commands::simulate(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
