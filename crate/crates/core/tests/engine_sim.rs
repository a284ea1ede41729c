//! Full-simulation behavior: energy integration against closed forms,
//! conservation through the provenance ledger, determinism, power gating,
//! carbon shifting, and policy comparisons.

use std::collections::BTreeMap;

use carbonsched_core::engine::{
    export_schedule_csv, run, run_policy_comparison, EngineConfig, PolicyKind, SolverKind,
};
use carbonsched_core::hardware::{
    CarbonIntensitySeries, Catalog, ComputeDevice, DeviceKind, StorageMedium, StorageTier,
};
use carbonsched_core::workload::{Access, MicroFunction, Sla};

fn cpu(id: &str, peak: f64, capacity: f64) -> ComputeDevice {
    ComputeDevice {
        id: id.to_string(),
        kind: DeviceKind::CPU,
        peak_power: peak,
        idle_fraction: 0.5,
        capacity,
        startup_latency: 0,
        startup_energy: 0.0,
        embodied_rate: 0.0,
    }
}

fn dram(id: &str) -> StorageMedium {
    StorageMedium {
        id: id.to_string(),
        tier: StorageTier::DRAM,
        capacity: 1 << 32,
        active_power_per_bw: 3.75e-10,
        idle_power_per_byte: 1.08e-10,
        access_latency_p50: 1,
        access_latency_tail: 2,
        bandwidth: 2e10,
        remote_access_penalty: 0,
    }
}

fn catalog_one_cpu() -> Catalog {
    Catalog {
        devices: vec![cpu("cpu0", 200.0, 1e6)],
        media: vec![dram("dram0")],
        objects: Vec::new(),
    }
}

fn function(id: &str, arrival: u64, work: f64, deadline: u64) -> MicroFunction {
    MicroFunction {
        id: id.to_string(),
        app_id: "A1".to_string(),
        arrival_us: arrival,
        work,
        speedup: BTreeMap::from([(DeviceKind::CPU, 1.0)]),
        reads: Vec::new(),
        writes: Vec::new(),
        sla: Sla::hard(deadline),
        energy_budget_j: None,
        parent: None,
    }
}

fn flat_intensity() -> CarbonIntensitySeries {
    CarbonIntensitySeries::constant(400.0)
}

#[test]
fn empty_trace_accrues_exactly_idle_energy() {
    let mut config = EngineConfig::default();
    config.horizon_us = Some(1_000_000);
    let result = run(
        &[],
        &catalog_one_cpu(),
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    // Idle power 100 W over 1 s.
    assert!((result.metrics.total_energy_j - 100.0).abs() < 1e-9);
    assert_eq!(result.metrics.sla_violations, 0);
    assert_eq!(result.metrics.functions_completed, 0);
}

#[test]
fn single_function_matches_hand_computation() {
    // work 1e5 on capacity 1e6 → 0.1 s busy; admitted at the 1 ms boundary.
    let trace = vec![function("f1", 0, 1e5, 10_000_000)];
    let config = EngineConfig::default();
    let result = run(
        &trace,
        &catalog_one_cpu(),
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    let horizon = result.metrics.horizon_us;
    assert_eq!(horizon, 101_000); // 1 ms admission + 100 ms execution
    let idle_integral = 100.0 * horizon as f64 / 1e6;
    let marginal = 100.0 * 0.1; // active span × busy time
    let expected = idle_integral + marginal;
    assert!(
        (result.metrics.total_energy_j - expected).abs() <= 1e-9 * expected,
        "{} vs {expected}",
        result.metrics.total_energy_j
    );
    assert_eq!(result.metrics.sla_violations, 0);
    // The function's direct energy is exactly the marginal.
    let rec = &result.provenance["f1"];
    assert!((rec.direct_energy - marginal).abs() <= 1e-9 * marginal);
}

#[test]
fn same_inputs_byte_identical_outputs() {
    let spec = carbonsched_core::workload::TraceSpec {
        duration_us: 200_000,
        base_rate: 300.0,
        burst_rate: 3_000.0,
        burst_duty: 0.2,
        burst_period_us: 50_000,
        seed: 99,
        apps: BTreeMap::from([(
            "A1".to_string(),
            carbonsched_core::workload::AppProfile {
                weight: 1.0,
                work: carbonsched_core::workload::Dist::Uniform { lo: 50.0, hi: 500.0 },
                speedup: BTreeMap::from([(DeviceKind::CPU, 1.0)]),
                deadline_us: carbonsched_core::workload::Dist::Fixed { value: 50_000.0 },
                percentile: 1.0,
                objects: Vec::new(),
                read_fraction: 1.0,
                write_fraction: 0.0,
                fanout: 0,
                energy_budget_j: None,
                carbon_budget_g: None,
            },
        )]),
    };
    let trace = carbonsched_core::workload::generate_trace(&spec).unwrap();
    let catalog = Catalog {
        devices: vec![cpu("cpu0", 200.0, 1e6), cpu("cpu1", 120.0, 2e6)],
        media: vec![dram("dram0")],
        objects: Vec::new(),
    };
    let config = EngineConfig::default();
    let a = run(
        &trace,
        &catalog,
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    let b = run(
        &trace,
        &catalog,
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    assert_eq!(a.metrics.to_json(), b.metrics.to_json());
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    export_schedule_csv(&a.schedule, &mut csv_a).unwrap();
    export_schedule_csv(&b.schedule, &mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn provenance_conserves_total_energy() {
    use rand::Rng;
    let mut rng = carbonsched_core::rng::substream(211, "engine-conservation");
    for trial in 0..20 {
        let n = rng.random_range(1..40);
        let mut trace: Vec<MicroFunction> = (0..n)
            .map(|i| {
                let mut f = function(
                    &format!("f{i:03}"),
                    rng.random_range(0..200_000),
                    rng.random_range(10.0..5e4),
                    rng.random_range(5_000..500_000),
                );
                if rng.random::<f64>() < 0.4 {
                    f.reads.push(Access {
                        object_id: format!("o{}", rng.random_range(0..4)),
                        bytes: rng.random_range(1..100_000),
                    });
                }
                f
            })
            .collect();
        trace.sort_by(|a, b| a.arrival_us.cmp(&b.arrival_us).then(a.id.cmp(&b.id)));
        let catalog = Catalog {
            devices: vec![cpu("cpu0", 200.0, 1e6), cpu("cpu1", 90.0, 5e5)],
            media: vec![dram("dram0")],
            objects: Vec::new(),
        };
        let config = EngineConfig::default();
        let result = run(
            &trace,
            &catalog,
            &flat_intensity(),
            PolicyKind::MufunctionHeuristic,
            &config,
        )
        .unwrap();
        let attributed: f64 = result
            .provenance
            .values()
            .map(|r| r.direct_energy + r.idle_share)
            .sum::<f64>()
            + result.metrics.operator_residual_j;
        let total = result.metrics.total_energy_j;
        assert!(
            (attributed - total).abs() <= 1e-9 * total.max(1.0),
            "trial {trial}: {attributed} vs {total}"
        );
    }
}

#[test]
fn horizon_extension_only_adds_idle() {
    let trace = vec![function("f1", 0, 1e4, 1_000_000)];
    let mut config = EngineConfig::default();
    config.horizon_us = Some(100_000);
    let short = run(
        &trace,
        &catalog_one_cpu(),
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    config.horizon_us = Some(200_000);
    let long = run(
        &trace,
        &catalog_one_cpu(),
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    assert!(long.metrics.total_energy_j > short.metrics.total_energy_j);
    // Earlier events unchanged.
    assert_eq!(short.schedule, long.schedule);
    let idle_delta = 100.0 * 0.1;
    assert!(
        (long.metrics.total_energy_j - short.metrics.total_energy_j - idle_delta).abs() < 1e-9
    );
}

#[test]
fn power_gating_zeroes_an_idle_horizon() {
    let mut config = EngineConfig::default();
    config.horizon_us = Some(1_000_000);
    config.power_gating = true;
    let result = run(
        &[],
        &catalog_one_cpu(),
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    assert_eq!(result.metrics.total_energy_j, 0.0);
}

#[test]
fn power_gating_wake_delays_completion_by_startup_latency() {
    let mut catalog = catalog_one_cpu();
    catalog.devices[0].startup_latency = 700;
    let trace = vec![function("f1", 5_000, 1e4, 1_000_000)];
    let mut config = EngineConfig::default();
    config.horizon_us = Some(2_000_000);

    config.power_gating = false;
    let ungated = run(
        &trace,
        &catalog,
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    config.power_gating = true;
    let gated = run(
        &trace,
        &catalog,
        &flat_intensity(),
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    let end = |r: &carbonsched_core::engine::ScheduleRow| r.end_us;
    assert_eq!(
        end(&gated.schedule[0]),
        end(&ungated.schedule[0]) + 700,
        "wake adds exactly the startup latency"
    );
    assert!(gated.metrics.total_energy_j < ungated.metrics.total_energy_j);
    assert_eq!(gated.metrics.sla_violations, ungated.metrics.sla_violations);
}

#[test]
fn power_gating_never_costs_energy_or_violations_on_slack_traces() {
    use rand::Rng;
    let mut rng = carbonsched_core::rng::substream(223, "gating-paired");
    for _ in 0..10 {
        let n = rng.random_range(1..20);
        let mut trace: Vec<MicroFunction> = (0..n)
            .map(|i| {
                function(
                    &format!("f{i:03}"),
                    rng.random_range(0..500_000),
                    rng.random_range(10.0..2e4),
                    1_000_000, // ample slack relative to the 0-latency wake
                )
            })
            .collect();
        trace.sort_by(|a, b| a.arrival_us.cmp(&b.arrival_us).then(a.id.cmp(&b.id)));
        let mut config = EngineConfig::default();
        config.horizon_us = Some(2_000_000);
        let mut gated_cfg = config.clone();
        gated_cfg.power_gating = true;
        let ungated = run(
            &trace,
            &catalog_one_cpu(),
            &flat_intensity(),
            PolicyKind::MufunctionHeuristic,
            &config,
        )
        .unwrap();
        let gated = run(
            &trace,
            &catalog_one_cpu(),
            &flat_intensity(),
            PolicyKind::MufunctionHeuristic,
            &gated_cfg,
        )
        .unwrap();
        assert!(gated.metrics.total_energy_j <= ungated.metrics.total_energy_j + 1e-12);
        assert_eq!(gated.metrics.sla_violations, ungated.metrics.sla_violations);
    }
}

#[test]
fn carbon_aware_deferral_shifts_into_greener_windows() {
    // Intensity halves at 50 ms; all functions have ~500 ms of slack.
    let series = CarbonIntensitySeries::new(vec![(0, 800.0), (50_000, 100.0)]).unwrap();
    let trace: Vec<MicroFunction> = (0..10)
        .map(|i| function(&format!("f{i:02}"), (i as u64) * 2_000, 2e4, 500_000))
        .collect();
    let mut config = EngineConfig::default();
    config.horizon_us = Some(1_000_000);

    let shifted = run(
        &trace,
        &catalog_one_cpu(),
        &series,
        PolicyKind::MufunctionHeuristic,
        &config,
    )
    .unwrap();
    let baseline = run(
        &trace,
        &catalog_one_cpu(),
        &series,
        PolicyKind::NoDefer,
        &config,
    )
    .unwrap();
    assert!(
        shifted.metrics.total_carbon_g < baseline.metrics.total_carbon_g,
        "shifted {} vs baseline {}",
        shifted.metrics.total_carbon_g,
        baseline.metrics.total_carbon_g
    );
    assert_eq!(shifted.metrics.sla_violations, 0);
    // Every execution waited for the green step.
    assert!(shifted.schedule.iter().all(|r| r.start_us >= 50_000));
}

#[test]
fn faas_baseline_pays_cold_starts_and_stranding() {
    let trace: Vec<MicroFunction> = (0..20)
        .map(|i| function(&format!("f{i:02}"), (i as u64) * 10_000, 1e4, 50_000))
        .collect();
    let catalog = Catalog {
        devices: vec![cpu("cpu0", 200.0, 1e6), cpu("cpu1", 200.0, 1e6)],
        media: vec![dram("dram0")],
        objects: Vec::new(),
    };
    let mut config = EngineConfig::default();
    config.horizon_us = Some(2_000_000);
    let rows = run_policy_comparison(
        &trace,
        &catalog,
        &flat_intensity(),
        &["faas-baseline".to_string(), "mufunction-heuristic".to_string()],
        &config,
    )
    .unwrap();
    let faas = &rows[0];
    let heur = &rows[1];
    assert!(faas.sla_violations >= 1, "cold starts must violate");
    assert!(
        faas.total_energy_j > heur.total_energy_j,
        "stranding costs energy: {} vs {}",
        faas.total_energy_j,
        heur.total_energy_j
    );
    assert!(faas.cold_start_time_total_us >= 125_000);
    assert_eq!(heur.cold_start_time_total_us, 0);
}

#[test]
fn identical_policies_compare_identically() {
    let trace = vec![function("f1", 0, 1e4, 100_000)];
    let config = EngineConfig::default();
    let rows = run_policy_comparison(
        &trace,
        &catalog_one_cpu(),
        &flat_intensity(),
        &[
            "mufunction-heuristic".to_string(),
            "mufunction-heuristic".to_string(),
        ],
        &config,
    )
    .unwrap();
    assert_eq!(rows[0].total_energy_j, rows[1].total_energy_j);
    assert_eq!(rows[0].sla_violations, rows[1].sla_violations);
}

#[test]
fn unknown_policy_lists_valid_names() {
    let trace = vec![function("f1", 0, 1e4, 100_000)];
    let err = run_policy_comparison(
        &trace,
        &catalog_one_cpu(),
        &flat_intensity(),
        &["mufunction-heuristic".to_string(), "banana".to_string()],
        &EngineConfig::default(),
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("banana"), "{msg}");
    assert!(msg.contains("mufunction-exact"), "{msg}");
}

#[test]
fn round_robin_never_beats_exact_without_contention() {
    let trace: Vec<MicroFunction> = (0..4)
        .map(|i| function(&format!("f{i}"), 0, 1e4, 10_000_000))
        .collect();
    let catalog = Catalog {
        devices: vec![cpu("cpu0", 300.0, 1e6), cpu("cpu1", 60.0, 1e6)],
        media: vec![dram("dram0")],
        objects: Vec::new(),
    };
    let mut config = EngineConfig::default();
    config.solver = SolverKind::Exact;
    config.horizon_us = Some(1_000_000);
    let rows = run_policy_comparison(
        &trace,
        &catalog,
        &flat_intensity(),
        &["round-robin".to_string(), "mufunction-exact".to_string()],
        &config,
    )
    .unwrap();
    assert_eq!(rows[0].sla_violations, rows[1].sla_violations);
    assert!(rows[1].total_energy_j <= rows[0].total_energy_j);
}
