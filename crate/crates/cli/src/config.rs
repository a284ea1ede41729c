//! Run configuration: TOML file merged with command-line overrides.
//!
//! Precedence, highest first: command-line flag, config-file key,
//! `CARBONSCHED_OUTDIR` (output directory only), built-in default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use carbonsched_core::engine::{EngineConfig, PolicyKind, SolverKind};
use carbonsched_core::placement::SlaMode;
use carbonsched_core::provenance::IdleAttribution;
use carbonsched_core::scheduler::DEFAULT_WINDOW_US;

/// Config-file schema. Keys match the run parameters exactly; unknown keys
/// are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub trace: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub intensity: Option<PathBuf>,
    pub policy: Option<String>,
    pub window_length_us: Option<u64>,
    pub solver: Option<String>,
    pub sla_mode: Option<String>,
    pub sla_penalty_j_per_us: Option<f64>,
    pub idle_attribution: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub horizon_us: Option<u64>,
    pub carbon_aware_deferral: Option<bool>,
    pub power_gating: Option<bool>,
    pub exact_cutoff: Option<usize>,
    pub network_j_per_byte: Option<f64>,
    pub faas_cold_start_us: Option<u64>,
    pub faas_container_share: Option<f64>,
    pub faas_keepalive_us: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag-level overrides (a subset mirrors the config file).
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunOverrides {
    /// Trace file (JSON lines).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Device catalog (TOML).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Carbon intensity series (JSON).
    #[arg(long)]
    pub intensity: Option<PathBuf>,
    /// Scheduling policy.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub window_length_us: Option<u64>,
    /// Placement solver: exact | heuristic.
    #[arg(long)]
    pub solver: Option<String>,
    /// SLA handling: hard | soft.
    #[arg(long)]
    pub sla_mode: Option<String>,
    /// Lateness price in soft mode, joules per violated µs.
    #[arg(long)]
    pub sla_penalty_j_per_us: Option<f64>,
    /// Idle-energy attribution: proportional | equal | operator-only.
    #[arg(long)]
    pub idle_attribution: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $CARBONSCHED_OUTDIR or '.').
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Minimum simulated horizon, µs (0 = run to drain).
    #[arg(long)]
    pub horizon_us: Option<u64>,
    #[arg(long)]
    pub carbon_aware_deferral: Option<bool>,
    #[arg(long)]
    pub power_gating: Option<bool>,
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub trace: PathBuf,
    pub catalog: PathBuf,
    pub intensity: Option<PathBuf>,
    pub policy: PolicyKind,
    pub output_dir: PathBuf,
    pub engine: EngineConfig,
}

pub fn resolve(file: &ConfigFile, flags: &RunOverrides) -> anyhow::Result<RunConfig> {
    let trace = flags
        .trace
        .clone()
        .or_else(|| file.trace.clone())
        .ok_or_else(|| anyhow::anyhow!("no trace file given (flag --trace or config key 'trace')"))?;
    let catalog = flags
        .catalog
        .clone()
        .or_else(|| file.catalog.clone())
        .ok_or_else(|| {
            anyhow::anyhow!("no catalog file given (flag --catalog or config key 'catalog')")
        })?;
    let intensity = flags.intensity.clone().or_else(|| file.intensity.clone());

    let policy_name = flags
        .policy
        .clone()
        .or_else(|| file.policy.clone())
        .unwrap_or_else(|| "mufunction-heuristic".to_string());
    let policy: PolicyKind = policy_name.parse()?;

    let solver_name = flags
        .solver
        .clone()
        .or_else(|| file.solver.clone())
        .unwrap_or_else(|| "heuristic".to_string());
    let solver = match solver_name.as_str() {
        "exact" => SolverKind::Exact,
        "heuristic" => SolverKind::Heuristic,
        other => bail!("unknown solver '{other}'; valid: exact, heuristic"),
    };

    let sla_name = flags
        .sla_mode
        .clone()
        .or_else(|| file.sla_mode.clone())
        .unwrap_or_else(|| "hard".to_string());
    let penalty = flags
        .sla_penalty_j_per_us
        .or(file.sla_penalty_j_per_us)
        .unwrap_or(0.0);
    let sla_mode = match sla_name.as_str() {
        "hard" => SlaMode::Hard,
        "soft" => SlaMode::Soft {
            penalty_j_per_us: penalty,
        },
        other => bail!("unknown sla mode '{other}'; valid: hard, soft"),
    };

    let idle_name = flags
        .idle_attribution
        .clone()
        .or_else(|| file.idle_attribution.clone())
        .unwrap_or_else(|| "proportional".to_string());
    let idle_attribution: IdleAttribution = idle_name.parse()?;

    let output_dir = flags
        .output_dir
        .clone()
        .or_else(|| file.output_dir.clone())
        .or_else(|| std::env::var_os("CARBONSCHED_OUTDIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let horizon = flags.horizon_us.or(file.horizon_us).unwrap_or(0);
    let mut engine = EngineConfig {
        window_length_us: flags
            .window_length_us
            .or(file.window_length_us)
            .unwrap_or(DEFAULT_WINDOW_US),
        solver,
        sla_mode,
        idle_attribution,
        carbon_aware_deferral: flags
            .carbon_aware_deferral
            .or(file.carbon_aware_deferral)
            .unwrap_or(true),
        power_gating: flags.power_gating.or(file.power_gating).unwrap_or(false),
        horizon_us: if horizon == 0 { None } else { Some(horizon) },
        seed: flags.seed.or(file.seed).unwrap_or(0),
        ..EngineConfig::default()
    };
    if let Some(c) = file.exact_cutoff {
        engine.exact_cutoff = c;
    }
    if let Some(v) = file.network_j_per_byte {
        engine.network_j_per_byte = v;
    }
    if let Some(v) = file.faas_cold_start_us {
        engine.faas.cold_start_us = v;
    }
    if let Some(v) = file.faas_container_share {
        engine.faas.container_share = v;
    }
    if let Some(v) = file.faas_keepalive_us {
        engine.faas.keepalive_us = v;
    }

    Ok(RunConfig {
        trace,
        catalog,
        intensity,
        policy,
        output_dir,
        engine,
    })
}
