//! Simulation outputs and their deterministic export formats.
//!
//! Result files are byte-stable across identical runs: maps are ordered,
//! floats are written with 17 significant digits, and nothing
//! wall-clock-dependent (solver wall time) enters any file.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::Result;
use crate::units::fmt_f64;

/// One committed (or failed) function execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleRow {
    pub function_id: String,
    pub app_id: String,
    pub window: u64,
    pub device_id: String,
    pub start_us: u64,
    pub end_us: u64,
    pub energy_j: f64,
    pub carbon_g: f64,
    pub violated: bool,
}

/// Per-(window, device) telemetry aggregate with the device's measured
/// energy, suitable as fitting input.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRow {
    pub window: u64,
    pub device_id: String,
    pub cpu_cycles: f64,
    pub accelerator_cycles: f64,
    pub network_bytes: f64,
    pub storage_bytes_moved: f64,
    pub byte_seconds_resident: f64,
    pub measured_j: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppRollup {
    pub functions: u64,
    pub direct_j: f64,
    pub idle_share_j: f64,
    pub carbon_g: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverRollup {
    pub windows: u64,
    pub exact_fallbacks: u64,
    pub nodes_expanded: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
}

/// Aggregate results of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub policy: String,
    pub seed: u64,
    pub horizon_us: u64,
    pub functions_total: u64,
    pub functions_completed: u64,
    pub sla_violations: u64,
    pub sla_violation_rate: f64,
    pub energy_budget_violations: u64,
    pub carbon_budget_violations: u64,
    pub total_energy_j: f64,
    pub operational_carbon_g: f64,
    pub embodied_carbon_g: f64,
    pub total_carbon_g: f64,
    pub operator_residual_j: f64,
    pub cold_start_time_total_us: u64,
    pub device_energy_j: BTreeMap<String, f64>,
    pub media_energy_j: BTreeMap<String, f64>,
    pub device_utilization: BTreeMap<String, f64>,
    pub per_app: BTreeMap<String, AppRollup>,
    pub solver: SolverRollup,
}

/// One row of a policy-comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    pub policy: String,
    pub total_energy_j: f64,
    pub total_carbon_g: f64,
    pub operational_carbon_g: f64,
    pub sla_violations: u64,
    pub completed: u64,
    pub cold_start_time_total_us: u64,
}

impl Metrics {
    /// Hand-written JSON with ordered keys and 17-significant-digit floats,
    /// so identical runs produce identical bytes.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        s.push_str(&format!("  \"policy\": {:?},\n", self.policy));
        s.push_str(&format!("  \"seed\": {},\n", self.seed));
        s.push_str(&format!("  \"horizon_us\": {},\n", self.horizon_us));
        s.push_str(&format!("  \"functions_total\": {},\n", self.functions_total));
        s.push_str(&format!(
            "  \"functions_completed\": {},\n",
            self.functions_completed
        ));
        s.push_str(&format!("  \"sla_violations\": {},\n", self.sla_violations));
        s.push_str(&format!(
            "  \"sla_violation_rate\": {},\n",
            fmt_f64(self.sla_violation_rate)
        ));
        s.push_str(&format!(
            "  \"energy_budget_violations\": {},\n",
            self.energy_budget_violations
        ));
        s.push_str(&format!(
            "  \"carbon_budget_violations\": {},\n",
            self.carbon_budget_violations
        ));
        s.push_str(&format!(
            "  \"total_energy_j\": {},\n",
            fmt_f64(self.total_energy_j)
        ));
        s.push_str(&format!(
            "  \"operational_carbon_g\": {},\n",
            fmt_f64(self.operational_carbon_g)
        ));
        s.push_str(&format!(
            "  \"embodied_carbon_g\": {},\n",
            fmt_f64(self.embodied_carbon_g)
        ));
        s.push_str(&format!(
            "  \"total_carbon_g\": {},\n",
            fmt_f64(self.total_carbon_g)
        ));
        s.push_str(&format!(
            "  \"operator_residual_j\": {},\n",
            fmt_f64(self.operator_residual_j)
        ));
        s.push_str(&format!(
            "  \"cold_start_time_total_us\": {},\n",
            self.cold_start_time_total_us
        ));
        push_map(&mut s, "device_energy_j", &self.device_energy_j);
        push_map(&mut s, "media_energy_j", &self.media_energy_j);
        push_map(&mut s, "device_utilization", &self.device_utilization);
        s.push_str("  \"per_app\": {\n");
        let apps: Vec<String> = self
            .per_app
            .iter()
            .map(|(app, r)| {
                format!(
                    "    {:?}: {{\"functions\": {}, \"direct_j\": {}, \"idle_share_j\": {}, \"carbon_g\": {}}}",
                    app,
                    r.functions,
                    fmt_f64(r.direct_j),
                    fmt_f64(r.idle_share_j),
                    fmt_f64(r.carbon_g)
                )
            })
            .collect();
        s.push_str(&apps.join(",\n"));
        if !apps.is_empty() {
            s.push('\n');
        }
        s.push_str("  },\n");
        s.push_str(&format!(
            "  \"solver\": {{\"windows\": {}, \"exact_fallbacks\": {}, \"nodes_expanded\": {}, \"cache_hits\": {}, \"cache_misses\": {}}}\n",
            self.solver.windows,
            self.solver.exact_fallbacks,
            self.solver.nodes_expanded,
            self.solver.cache_hits,
            self.solver.cache_misses
        ));
        s.push_str("}\n");
        s
    }
}

fn push_map(s: &mut String, key: &str, map: &BTreeMap<String, f64>) {
    s.push_str(&format!("  {key:?}: {{"));
    let parts: Vec<String> = map
        .iter()
        .map(|(k, v)| format!("{k:?}: {}", fmt_f64(*v)))
        .collect();
    s.push_str(&parts.join(", "));
    s.push_str("},\n");
}

/// Schedule CSV: one row per function execution (or failure to place).
pub fn export_schedule_csv<W: Write>(rows: &[ScheduleRow], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "function_id,window,device_id,start_us,end_us,energy_j,carbon_g,violated"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.function_id,
            r.window,
            r.device_id,
            r.start_us,
            r.end_us,
            fmt_f64(r.energy_j),
            fmt_f64(r.carbon_g),
            r.violated
        )?;
    }
    Ok(())
}

/// Telemetry CSV with the canonical feature columns plus `measured_j`;
/// consumable by the model-fitting command.
pub fn export_telemetry_csv<W: Write>(rows: &[TelemetryRow], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "window,device_id,cpu_cycles,accelerator_cycles,network_bytes,storage_bytes_moved,byte_seconds_resident,measured_j"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.window,
            r.device_id,
            fmt_f64(r.cpu_cycles),
            fmt_f64(r.accelerator_cycles),
            fmt_f64(r.network_bytes),
            fmt_f64(r.storage_bytes_moved),
            fmt_f64(r.byte_seconds_resident),
            fmt_f64(r.measured_j)
        )?;
    }
    Ok(())
}

/// Policy-comparison CSV, rows in caller order.
pub fn export_comparison_csv<W: Write>(rows: &[PolicyRow], out: &mut W) -> Result<()> {
    writeln!(
        out,
        "policy,total_energy_j,total_carbon_g,operational_carbon_g,sla_violations,completed,cold_start_time_total_us"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.policy,
            fmt_f64(r.total_energy_j),
            fmt_f64(r.total_carbon_g),
            fmt_f64(r.operational_carbon_g),
            r.sla_violations,
            r.completed,
            r.cold_start_time_total_us
        )?;
    }
    Ok(())
}
