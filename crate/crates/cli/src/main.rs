//! carbonsched: deterministic simulation of energy- and carbon-aware
//! scheduling for fine-grained datacenter functions.
//!
//! Exit codes: 0 success, 2 input/validation error, 3 runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use carbonsched_core::SimError;
use commands::SweepAxis;
use config::{ConfigFile, RunOverrides};

/// Marker for failures caused by bad input rather than by execution.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
impl std::error::Error for InputError {}

impl InputError {
    pub fn msg(s: String) -> anyhow::Error {
        anyhow::Error::new(InputError(s))
    }
    pub fn wrap(e: anyhow::Error) -> anyhow::Error {
        anyhow::Error::new(InputError(format!("{e:#}")))
    }
}

impl From<SimError> for InputError {
    fn from(e: SimError) -> Self {
        InputError(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "carbonsched",
    version,
    about = "Simulate energy- and carbon-aware scheduling of datacenter microfunctions"
)]
struct Cli {
    /// Config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation; writes metrics.json, schedule.csv,
    /// provenance.csv and telemetry.csv.
    Simulate {
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Sweep one axis; writes sweep.csv with one row per point.
    Sweep {
        #[command(flatten)]
        overrides: RunOverrides,
        /// Deadline scales, e.g. --deadline-scales 1,2,4 (whole-trace
        /// eco-mode curve via the exact solver).
        #[arg(long, value_delimiter = ',')]
        deadline_scales: Option<Vec<f64>>,
        /// Policies to compare, e.g. --policies mufunction-exact,faas-baseline.
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
        /// Intensity-series files to compare.
        #[arg(long, value_delimiter = ',')]
        intensity_files: Option<Vec<PathBuf>>,
    },
    /// Fit the attribution model from a telemetry CSV; writes model.json.
    Fit {
        /// Telemetry CSV with feature columns and a measured_j column.
        telemetry: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate a trace from a spec file.
    GenTrace {
        /// Trace spec (TOML).
        spec: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output trace path (JSON lines).
        #[arg(long, default_value = "trace.jsonl")]
        output: PathBuf,
    },
    /// Validate inputs, reporting every invariant violation.
    Validate {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        intensity: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

/// Input problems exit 2; everything else (solver failures, rank
/// deficiency, write failures) exits 3.
fn is_input_error(e: &anyhow::Error) -> bool {
    for cause in e.chain() {
        if cause.downcast_ref::<InputError>().is_some() {
            return true;
        }
        if let Some(sim) = cause.downcast_ref::<SimError>() {
            return matches!(
                sim,
                SimError::Validation(_)
                    | SimError::Parse { .. }
                    | SimError::Unknown { .. }
                    | SimError::CallGraphCycle { .. }
            );
        }
    }
    false
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(InputError::wrap)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Simulate { overrides } => {
            let run_config = config::resolve(&file, &overrides).map_err(InputError::wrap)?;
            commands::cmd_simulate(&run_config)
        }
        Command::Sweep {
            overrides,
            deadline_scales,
            policies,
            intensity_files,
        } => {
            let run_config = config::resolve(&file, &overrides).map_err(InputError::wrap)?;
            let axes_given = [
                deadline_scales.is_some(),
                policies.is_some(),
                intensity_files.is_some(),
            ]
            .iter()
            .filter(|b| **b)
            .count();
            if axes_given != 1 {
                return Err(InputError::msg(
                    "sweep needs exactly one axis: --deadline-scales, --policies, or --intensity-files"
                        .to_string(),
                ));
            }
            let axis = if let Some(scales) = deadline_scales {
                SweepAxis::DeadlineScales(scales)
            } else if let Some(p) = policies {
                SweepAxis::Policies(p)
            } else {
                SweepAxis::IntensityFiles(intensity_files.unwrap())
            };
            commands::cmd_sweep(&run_config, &axis)
        }
        Command::Fit {
            telemetry,
            output_dir,
        } => {
            let out = output_dir
                .or_else(|| std::env::var_os("CARBONSCHED_OUTDIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            commands::cmd_fit(&telemetry, &out)
        }
        Command::GenTrace { spec, seed, output } => commands::cmd_gen_trace(&spec, seed, &output),
        Command::Validate {
            trace,
            catalog,
            intensity,
        } => commands::cmd_validate(trace.as_deref(), catalog.as_deref(), intensity.as_deref()),
    }
}
