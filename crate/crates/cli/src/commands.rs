//! Subcommand implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

use carbonsched_core::engine::{
    export_comparison_csv, export_schedule_csv, export_telemetry_csv, run, run_policy_comparison,
};
use carbonsched_core::hardware::{CarbonIntensitySeries, Catalog};
use carbonsched_core::placement::{pareto_sweep, CostParams, DeviceSlot, MediumSlot,
    PlacementProblem};
use carbonsched_core::provenance::{export_csv as export_provenance_csv, fit_model, TelemetrySample};
use carbonsched_core::units::fmt_f64;
use carbonsched_core::workload::{generate_trace, parse_trace_file, validate_trace, TraceSpec};

use crate::config::RunConfig;
use crate::InputError;

/// Load the three simulation inputs, classifying failures as input errors.
fn load_inputs(
    config: &RunConfig,
) -> anyhow::Result<(
    Vec<carbonsched_core::workload::MicroFunction>,
    Catalog,
    CarbonIntensitySeries,
)> {
    let trace = parse_trace_file(&config.trace).map_err(InputError::from)?;
    let catalog = Catalog::load(&config.catalog).map_err(InputError::from)?;
    let intensity = match &config.intensity {
        Some(path) => load_intensity(path)?,
        None => CarbonIntensitySeries::constant(400.0),
    };
    Ok((trace, catalog, intensity))
}

pub fn load_intensity(path: &Path) -> anyhow::Result<CarbonIntensitySeries> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading intensity series {}", path.display()))
        .map_err(InputError::wrap)?;
    let series: CarbonIntensitySeries = serde_json::from_str(&text)
        .with_context(|| format!("parsing intensity series {}", path.display()))
        .map_err(InputError::wrap)?;
    let errs = series.validate();
    if !errs.is_empty() {
        return Err(InputError::msg(errs.join("; ")));
    }
    Ok(series)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// `simulate`: one full run; writes metrics.json, schedule.csv,
/// provenance.csv and telemetry.csv into the output directory.
pub fn cmd_simulate(config: &RunConfig) -> anyhow::Result<()> {
    let (trace, catalog, intensity) = load_inputs(config)?;
    let result = run(&trace, &catalog, &intensity, config.policy, &config.engine)?;

    write_file(
        &config.output_dir,
        "metrics.json",
        result.metrics.to_json().as_bytes(),
    )?;
    let mut schedule = Vec::new();
    export_schedule_csv(&result.schedule, &mut schedule)?;
    write_file(&config.output_dir, "schedule.csv", &schedule)?;
    let mut provenance = Vec::new();
    export_provenance_csv(&result.provenance, &mut provenance)?;
    write_file(&config.output_dir, "provenance.csv", &provenance)?;
    let mut telemetry = Vec::new();
    export_telemetry_csv(&result.telemetry, &mut telemetry)?;
    write_file(&config.output_dir, "telemetry.csv", &telemetry)?;

    eprintln!(
        "simulated {} functions on policy {}: {} J, {} gCO2e, {} violations",
        result.metrics.functions_total,
        result.metrics.policy,
        result.metrics.total_energy_j,
        result.metrics.total_carbon_g,
        result.metrics.sla_violations,
    );
    Ok(())
}

/// Which axis `sweep` walks.
#[derive(Debug, Clone)]
pub enum SweepAxis {
    /// One-shot placement optimization of the whole trace per scale.
    DeadlineScales(Vec<f64>),
    /// Full simulation per policy.
    Policies(Vec<String>),
    /// Full simulation per intensity-series file.
    IntensityFiles(Vec<PathBuf>),
}

/// `sweep`: one row per sweep point, ordered by the sweep axis.
pub fn cmd_sweep(config: &RunConfig, axis: &SweepAxis) -> anyhow::Result<()> {
    let (trace, catalog, intensity) = load_inputs(config)?;
    let out = match axis {
        SweepAxis::DeadlineScales(scales) => {
            if scales.is_empty() {
                return Err(InputError::msg("empty deadline-scale axis".to_string()));
            }
            // Eco-mode curve: the whole trace as one assignment instance,
            // solved exactly per scale; deadlines are absolute.
            let problem = whole_trace_problem(&trace, &catalog, &config.engine.network_j_per_byte);
            let rows = pareto_sweep(&problem, scales)?;
            let mut csv = Vec::new();
            writeln!(csv, "lambda,objective_j")?;
            for (lambda, cost) in rows {
                writeln!(csv, "{},{}", fmt_f64(lambda), fmt_f64(cost))?;
            }
            csv
        }
        SweepAxis::Policies(policies) => {
            if policies.is_empty() {
                return Err(InputError::msg("empty policy axis".to_string()));
            }
            let rows =
                run_policy_comparison(&trace, &catalog, &intensity, policies, &config.engine)?;
            let mut csv = Vec::new();
            export_comparison_csv(&rows, &mut csv)?;
            csv
        }
        SweepAxis::IntensityFiles(files) => {
            if files.is_empty() {
                return Err(InputError::msg("empty intensity axis".to_string()));
            }
            let mut csv = Vec::new();
            writeln!(
                csv,
                "intensity,total_energy_j,operational_carbon_g,total_carbon_g,sla_violations"
            )?;
            for path in files {
                let series = load_intensity(path)?;
                let result = run(&trace, &catalog, &series, config.policy, &config.engine)?;
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    path.display(),
                    fmt_f64(result.metrics.total_energy_j),
                    fmt_f64(result.metrics.operational_carbon_g),
                    fmt_f64(result.metrics.total_carbon_g),
                    result.metrics.sla_violations
                )?;
            }
            csv
        }
    };
    write_file(&config.output_dir, "sweep.csv", &out)?;
    Ok(())
}

/// The whole trace viewed as one placement instance at t = 0.
fn whole_trace_problem(
    trace: &[carbonsched_core::workload::MicroFunction],
    catalog: &Catalog,
    network_j_per_byte: &f64,
) -> PlacementProblem {
    let mut object_locations: BTreeMap<String, std::collections::BTreeSet<String>> =
        BTreeMap::new();
    let default_home = catalog
        .media
        .iter()
        .min_by_key(|m| (m.access_latency_tail, m.id.clone()))
        .map(|m| m.id.clone());
    for o in &catalog.objects {
        object_locations
            .entry(o.id.clone())
            .or_default()
            .insert(o.home.clone());
    }
    for f in trace {
        for a in f.reads.iter().chain(f.writes.iter()) {
            let entry = object_locations.entry(a.object_id.clone()).or_default();
            if entry.is_empty() {
                if let Some(home) = &default_home {
                    entry.insert(home.clone());
                }
            }
        }
    }
    // Deadlines become absolute: fold arrivals in, with everything
    // available from t = 0.
    let functions: Vec<carbonsched_core::workload::MicroFunction> = trace
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.sla.deadline_us += f.arrival_us;
            f.arrival_us = 0;
            f
        })
        .collect();
    let horizon = functions
        .iter()
        .map(|f| f.deadline_abs())
        .max()
        .unwrap_or(1_000);
    PlacementProblem {
        functions,
        devices: catalog.devices.iter().cloned().map(DeviceSlot::new).collect(),
        media: catalog
            .media
            .iter()
            .cloned()
            .map(MediumSlot::unbounded)
            .collect(),
        object_locations,
        now: 0,
        window_end: horizon,
        params: CostParams {
            network_j_per_byte: *network_j_per_byte,
            sla_mode: carbonsched_core::placement::SlaMode::Hard,
        },
    }
}

/// `fit`: least-squares energy model from a telemetry CSV with feature
/// columns and a `measured_j` label column.
pub fn cmd_fit(telemetry_path: &Path, output_dir: &Path) -> anyhow::Result<()> {
    let mut reader = csv::Reader::from_path(telemetry_path)
        .with_context(|| format!("reading telemetry {}", telemetry_path.display()))
        .map_err(InputError::wrap)?;
    let headers = reader
        .headers()
        .map_err(|e| InputError::msg(e.to_string()))?
        .clone();
    let measured_idx = headers
        .iter()
        .position(|h| h == "measured_j")
        .ok_or_else(|| InputError::msg("telemetry CSV must have a 'measured_j' column".into()))?;
    // Identifier-like columns are not features.
    let skip = ["window", "device_id", "function_id", "measured_j"];
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !skip.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if feature_cols.is_empty() {
        return Err(InputError::msg("telemetry CSV has no feature columns".into()));
    }

    let mut samples: Vec<(TelemetrySample, f64)> = Vec::new();
    for (rowno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| InputError::msg(format!("row {}: {e}", rowno + 2)))?;
        let mut features = BTreeMap::new();
        for (idx, name) in &feature_cols {
            let raw = record.get(*idx).unwrap_or("");
            let value: f64 = raw.parse().map_err(|_| {
                InputError::msg(format!("row {}: column '{name}' is not numeric", rowno + 2))
            })?;
            features.insert(name.clone(), value);
        }
        let measured: f64 = record
            .get(measured_idx)
            .unwrap_or("")
            .parse()
            .map_err(|_| InputError::msg(format!("row {}: measured_j not numeric", rowno + 2)))?;
        samples.push((
            TelemetrySample {
                function_id: format!("row{rowno}"),
                device_id: String::new(),
                features,
            },
            measured,
        ));
    }
    if samples.len() < feature_cols.len() + 1 {
        return Err(InputError::msg(format!(
            "need at least {} samples for {} features, got {}",
            feature_cols.len() + 1,
            feature_cols.len(),
            samples.len()
        )));
    }

    // Rank deficiency is a runtime (exit 3) failure, not an input error.
    let report = fit_model(&samples)?;
    let mut json = String::new();
    json.push_str("{\n  \"coefficients\": {");
    let parts: Vec<String> = report
        .model
        .coefficients
        .iter()
        .map(|(k, v)| format!("{k:?}: {}", fmt_f64(*v)))
        .collect();
    json.push_str(&parts.join(", "));
    json.push_str("},\n");
    json.push_str(&format!("  \"baseline\": {},\n", fmt_f64(report.model.baseline)));
    json.push_str(&format!("  \"rmse\": {},\n", fmt_f64(report.rmse)));
    json.push_str(&format!(
        "  \"max_abs_residual\": {},\n",
        fmt_f64(report.max_abs_residual)
    ));
    json.push_str(&format!("  \"samples\": {}\n}}\n", report.samples));
    write_file(output_dir, "model.json", json.as_bytes())?;
    eprintln!(
        "fitted {} features from {} samples, rmse {}",
        report.model.coefficients.len(),
        report.samples,
        report.rmse
    );
    Ok(())
}

/// `gen-trace`: synthesize a trace from a spec file.
pub fn cmd_gen_trace(
    spec_path: &Path,
    seed_override: Option<u64>,
    output: &Path,
) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading trace spec {}", spec_path.display()))
        .map_err(InputError::wrap)?;
    let mut spec = TraceSpec::from_toml(&text).map_err(InputError::from)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let trace = generate_trace(&spec)?;
    let mut buf = Vec::new();
    carbonsched_core::workload::serialize_trace(&trace, &mut buf)?;
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(output, &buf).with_context(|| format!("writing {}", output.display()))?;
    eprintln!("generated {} functions to {}", trace.len(), output.display());
    Ok(())
}

/// `validate`: check every invariant of the given inputs, reporting all
/// failures rather than the first.
pub fn cmd_validate(
    trace: Option<&Path>,
    catalog: Option<&Path>,
    intensity: Option<&Path>,
) -> anyhow::Result<()> {
    let mut failures: Vec<String> = Vec::new();
    if let Some(path) = trace {
        match parse_trace_file(path) {
            Ok(t) => failures.extend(
                validate_trace(&t)
                    .into_iter()
                    .map(|e| format!("{}: {e}", path.display())),
            ),
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    if let Some(path) = catalog {
        match std::fs::read_to_string(path) {
            Ok(text) => match toml::from_str::<Catalog>(&text) {
                Ok(c) => failures.extend(
                    c.validate()
                        .into_iter()
                        .map(|e| format!("{}: {e}", path.display())),
                ),
                Err(e) => failures.push(format!("{}: {e}", path.display())),
            },
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    if let Some(path) = intensity {
        if let Err(e) = load_intensity(path) {
            failures.push(format!("{}: {e}", path.display()));
        }
    }
    if failures.is_empty() {
        eprintln!("all inputs valid");
        Ok(())
    } else {
        for f in &failures {
            eprintln!("invalid: {f}");
        }
        Err(InputError::msg(format!("{} validation failure(s)", failures.len())))
    }
}
