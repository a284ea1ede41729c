//! Deterministic discrete-event simulation core.
//!
//! Advances virtual time over an event queue (arrivals, window boundaries,
//! starts, completions, intensity changes), keeps device and medium state,
//! integrates energy exactly over piecewise-constant utilization, closes
//! the provenance ledger every scheduling window, and produces metrics plus
//! exportable schedule/provenance/telemetry tables.
//!
//! Events at equal timestamps process in the fixed kind order
//! Completion < IntensityChange < WindowBoundary < Arrival < Start, then by
//! insertion sequence, so freed capacity is visible to the window scheduler
//! before new admissions and no tie ever reaches policy code unordered.

mod metrics;

pub use metrics::{
    export_comparison_csv, export_schedule_csv, export_telemetry_csv, AppRollup, Metrics,
    PolicyRow, ScheduleRow, SolverRollup, TelemetryRow,
};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hardware::{
    intensity_at, power_draw, CarbonIntensitySeries, Catalog, DeviceKind, StorageMedium,
};
use crate::placement::{
    commit_assignment, solve_exact_with_stats, solve_heuristic_with_stats, Assignment, CostParams,
    DeviceSlot, MediumSlot, MemoCache, PlacementProblem, SlaMode, SolverStats,
    DEFAULT_EXACT_CUTOFF,
};
use crate::provenance::{
    aggregate_provenance, attribute_interval, estimate_energy, AttributionModel, IdleAttribution,
    ProvenanceRecord, TelemetrySample,
};
use crate::scheduler::{latest_feasible_start, partition, DEFAULT_WINDOW_US};
use crate::units::{us_to_sec, JOULES_PER_KWH};
use crate::workload::{validate_trace, DataObject, MicroFunction};

/// Which placement solver a windowed policy runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Exact,
    Heuristic,
}

/// When operational carbon is priced for a function's direct energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarbonTiming {
    Completion,
    Start,
}

/// Scheduling policies available to simulations and comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Windowed slack scheduler with the exact placement solver.
    MufunctionExact,
    /// Windowed slack scheduler with the greedy memoized solver.
    MufunctionHeuristic,
    /// Statically bundled containers with cold starts (FaaS emulation).
    FaasBaseline,
    /// Cyclic device choice, no optimization, no deferral.
    RoundRobin,
    /// Windowed heuristic placement but every arrival admitted immediately.
    NoDefer,
}

pub const POLICY_NAMES: [&str; 5] = [
    "mufunction-exact",
    "mufunction-heuristic",
    "faas-baseline",
    "round-robin",
    "no-defer",
];

impl std::str::FromStr for PolicyKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mufunction-exact" => Ok(PolicyKind::MufunctionExact),
            "mufunction-heuristic" => Ok(PolicyKind::MufunctionHeuristic),
            "faas-baseline" => Ok(PolicyKind::FaasBaseline),
            "round-robin" => Ok(PolicyKind::RoundRobin),
            "no-defer" => Ok(PolicyKind::NoDefer),
            other => Err(SimError::Unknown {
                what: "policy",
                got: other.to_string(),
                valid: POLICY_NAMES.to_vec(),
            }),
        }
    }
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::MufunctionExact => "mufunction-exact",
            PolicyKind::MufunctionHeuristic => "mufunction-heuristic",
            PolicyKind::FaasBaseline => "faas-baseline",
            PolicyKind::RoundRobin => "round-robin",
            PolicyKind::NoDefer => "no-defer",
        }
    }
}

/// FaaS-baseline knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaasParams {
    /// Latency to initialize a cold container before its first invocation.
    pub cold_start_us: u64,
    /// Fraction of a CPU device one container's static bundle reserves.
    pub container_share: f64,
    /// Idle time before a warm container is reclaimed.
    pub keepalive_us: u64,
}

impl Default for FaasParams {
    fn default() -> Self {
        FaasParams {
            cold_start_us: 125_000,
            container_share: 0.25,
            keepalive_us: 1_000_000,
        }
    }
}

/// Engine configuration shared by all policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub window_length_us: u64,
    pub solver: SolverKind,
    /// Window sizes above this fall back from exact to heuristic placement.
    pub exact_cutoff: usize,
    pub sla_mode: SlaMode,
    pub idle_attribution: IdleAttribution,
    /// Spend slack waiting for greener windows (needs an intensity series
    /// with structure to look ahead into).
    pub carbon_aware_deferral: bool,
    /// Power-gate devices with no committed or imminent work.
    pub power_gating: bool,
    pub carbon_timing: CarbonTiming,
    pub network_j_per_byte: f64,
    /// Minimum simulated horizon; the run extends past it if work drains
    /// later. Idle energy accrues to the horizon end.
    pub horizon_us: Option<u64>,
    pub seed: u64,
    pub faas: FaasParams,
    /// Optional fitted model for direct-energy estimates; the default uses
    /// the engine's exact marginal energies (the simulator is its own lab).
    pub attribution_model: Option<AttributionModel>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            window_length_us: DEFAULT_WINDOW_US,
            solver: SolverKind::Heuristic,
            exact_cutoff: DEFAULT_EXACT_CUTOFF,
            sla_mode: SlaMode::Hard,
            idle_attribution: IdleAttribution::Proportional,
            carbon_aware_deferral: true,
            power_gating: false,
            carbon_timing: CarbonTiming::Completion,
            network_j_per_byte: 1e-9,
            horizon_us: None,
            seed: 0,
            faas: FaasParams::default(),
            attribution_model: None,
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub metrics: Metrics,
    pub provenance: BTreeMap<String, ProvenanceRecord>,
    pub schedule: Vec<ScheduleRow>,
    pub telemetry: Vec<TelemetryRow>,
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    Arrival { fidx: usize },
    WindowBoundary,
    Start { fidx: usize, device: usize },
    Completion { fidx: usize, device: usize },
    IntensityChange { value: f64 },
    /// Container keepalive expiry (FaaS).
    Custom { container: usize },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Completion { .. } => 0,
            EventKind::IntensityChange { .. } => 1,
            EventKind::WindowBoundary => 2,
            EventKind::Arrival { .. } => 3,
            EventKind::Start { .. } => 4,
            EventKind::Custom { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Event {
    time: u64,
    kind: EventKind,
    seq: u64,
}

impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap pops the smallest (time, rank, seq) first.
        (other.time, other.kind.rank(), other.seq).cmp(&(self.time, self.kind.rank(), self.seq))
    }
}

// ---------------------------------------------------------------------------
// Device and medium state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct DeviceState {
    device: crate::hardware::ComputeDevice,
    gated: bool,
    utilization: f64,
    last_us: u64,
    energy_j: f64,
    busy_weighted_us: f64,
    busy_until: u64,
    configured_app: Option<String>,
}

impl DeviceState {
    fn advance(&mut self, now: u64) {
        if now > self.last_us {
            let dt = now - self.last_us;
            if !self.gated {
                let p = power_draw(&self.device, self.utilization)
                    .expect("engine keeps utilization in range");
                self.energy_j += p * us_to_sec(dt);
            }
            self.busy_weighted_us += self.utilization * dt as f64;
            self.last_us = now;
        }
    }

    fn set_utilization(&mut self, now: u64, u: f64) {
        self.advance(now);
        self.utilization = u;
    }
}

#[derive(Debug, Clone)]
struct MediumState {
    medium: StorageMedium,
    resident_bytes: u64,
    last_us: u64,
    energy_j: f64,
}

impl MediumState {
    fn advance(&mut self, now: u64) {
        if now > self.last_us {
            let dt = now - self.last_us;
            self.energy_j +=
                self.resident_bytes as f64 * self.medium.idle_power_per_byte * us_to_sec(dt);
            self.last_us = now;
        }
    }
}

#[derive(Debug, Clone)]
struct Committed {
    start: u64,
    window: u64,
    /// object id → medium index.
    media: BTreeMap<String, usize>,
    marginal_energy_j: f64,
    flagged: bool,
}

#[derive(Debug, Clone, Default)]
struct FnOutcome {
    completed_at: Option<u64>,
    violated: bool,
    energy_j: f64,
    carbon_g: f64,
}

#[derive(Debug, Clone)]
struct Container {
    app: String,
    device: usize,
    busy_until: u64,
    warm_until: u64,
    alive: bool,
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct Engine {
    config: EngineConfig,
    policy: PolicyKind,
    trace: Vec<MicroFunction>,
    intensity: CarbonIntensitySeries,

    queue: BinaryHeap<Event>,
    seq: u64,
    now: u64,

    devices: Vec<DeviceState>,
    media: Vec<MediumState>,
    objects: BTreeMap<String, DataObject>,
    object_replicas: BTreeMap<String, Vec<String>>,

    pending: BTreeSet<usize>,
    committed: BTreeMap<usize, Committed>,
    outcomes: Vec<FnOutcome>,

    memo: MemoCache,
    solver_stats: SolverStats,
    windows_solved: u64,
    exact_fallbacks: u64,

    window_index: u64,
    boundary_scheduled: bool,
    /// Energy snapshot at the last ledger close, for interval deltas.
    interval_energy_base: f64,
    /// Per-device energy snapshots for telemetry interval deltas.
    interval_device_base: BTreeMap<String, f64>,
    /// Completions since the last ledger close.
    interval_samples: Vec<(usize, TelemetrySample, f64)>,

    /// Accumulated per-function attribution across intervals.
    attributed: BTreeMap<usize, (f64, f64)>,
    idle_carbon: BTreeMap<usize, f64>,
    operator_residual_j: f64,
    operator_carbon_g: f64,

    containers: Vec<Container>,
    cold_start_total_us: u64,
    round_robin_cursor: usize,

    schedule: Vec<ScheduleRow>,
    telemetry: Vec<TelemetryRow>,
    unplaceable: BTreeSet<usize>,
    rr_order: Vec<usize>,
}

/// Run one simulation. Deterministic for fixed inputs.
pub fn run(
    trace: &[MicroFunction],
    catalog: &Catalog,
    intensity: &CarbonIntensitySeries,
    policy: PolicyKind,
    config: &EngineConfig,
) -> Result<RunResult> {
    let errs = validate_trace(trace);
    if !errs.is_empty() {
        return Err(SimError::Validation(errs.join("; ")));
    }
    let errs = catalog.validate();
    if !errs.is_empty() {
        return Err(SimError::Validation(errs.join("; ")));
    }
    let errs = intensity.validate();
    if !errs.is_empty() {
        return Err(SimError::Validation(errs.join("; ")));
    }
    if catalog.devices.is_empty() {
        return Err(SimError::Validation("catalog has no devices".to_string()));
    }
    let mut engine = Engine::new(trace.to_vec(), catalog, intensity.clone(), policy, config)?;
    engine.run_loop();
    Ok(engine.finalize())
}

/// Convenience wrapper matching the scheduler-centric view of a run.
pub fn run_horizon(
    trace: &[MicroFunction],
    catalog: &Catalog,
    intensity: &CarbonIntensitySeries,
    policy: PolicyKind,
    config: &EngineConfig,
) -> Result<RunResult> {
    run(trace, catalog, intensity, policy, config)
}

/// Run several policies on identical inputs and report them side by side.
/// Rows are ordered as the `policies` argument lists them.
pub fn run_policy_comparison(
    trace: &[MicroFunction],
    catalog: &Catalog,
    intensity: &CarbonIntensitySeries,
    policies: &[String],
    config: &EngineConfig,
) -> Result<Vec<PolicyRow>> {
    if policies.len() < 2 {
        return Err(SimError::Domain(
            "policy comparison needs at least two policies".to_string(),
        ));
    }
    let mut rows = Vec::with_capacity(policies.len());
    for name in policies {
        let policy: PolicyKind = name.parse()?;
        let result = run(trace, catalog, intensity, policy, config)?;
        rows.push(PolicyRow {
            policy: name.clone(),
            total_energy_j: result.metrics.total_energy_j,
            total_carbon_g: result.metrics.total_carbon_g,
            operational_carbon_g: result.metrics.operational_carbon_g,
            sla_violations: result.metrics.sla_violations,
            completed: result.metrics.functions_completed,
            cold_start_time_total_us: result.metrics.cold_start_time_total_us,
        });
    }
    Ok(rows)
}

impl Engine {
    fn new(
        trace: Vec<MicroFunction>,
        catalog: &Catalog,
        intensity: CarbonIntensitySeries,
        policy: PolicyKind,
        config: &EngineConfig,
    ) -> Result<Self> {
        let devices: Vec<DeviceState> = catalog
            .devices
            .iter()
            .map(|d| DeviceState {
                device: d.clone(),
                gated: false,
                utilization: 0.0,
                last_us: 0,
                energy_j: 0.0,
                busy_weighted_us: 0.0,
                busy_until: 0,
                configured_app: None,
            })
            .collect();
        let mut media: Vec<MediumState> = catalog
            .media
            .iter()
            .map(|m| MediumState {
                medium: m.clone(),
                resident_bytes: 0,
                last_us: 0,
                energy_j: 0.0,
            })
            .collect();
        media.sort_by(|a, b| a.medium.id.cmp(&b.medium.id));

        // Data objects: catalog entries first, then anything the trace
        // touches, homed on the lowest-tail-latency medium (ties by id).
        let mut objects: BTreeMap<String, DataObject> = catalog
            .objects
            .iter()
            .map(|o| {
                (
                    o.id.clone(),
                    DataObject {
                        id: o.id.clone(),
                        size: o.size,
                        home: o.home.clone(),
                    },
                )
            })
            .collect();
        if !media.is_empty() {
            let default_home = media
                .iter()
                .min_by_key(|m| (m.medium.access_latency_tail, m.medium.id.clone()))
                .map(|m| m.medium.id.clone())
                .unwrap();
            for f in &trace {
                for a in f.reads.iter().chain(f.writes.iter()) {
                    let entry = objects.entry(a.object_id.clone()).or_insert(DataObject {
                        id: a.object_id.clone(),
                        size: 0,
                        home: default_home.clone(),
                    });
                    entry.size = entry.size.max(a.bytes);
                }
            }
        } else {
            for f in &trace {
                if !f.reads.is_empty() || !f.writes.is_empty() {
                    return Err(SimError::Validation(format!(
                        "function '{}' accesses data but the catalog has no media",
                        f.id
                    )));
                }
            }
        }
        // Replicated objects consume storage (and idle power) everywhere
        // they are resident.
        let mut replicas: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for o in &catalog.objects {
            replicas.insert(o.id.clone(), o.replicas.clone());
        }
        for o in objects.values() {
            for medium_id in std::iter::once(&o.home)
                .chain(replicas.get(&o.id).map(|v| v.iter()).unwrap_or_default().into_iter())
            {
                if let Some(m) = media.iter_mut().find(|m| m.medium.id == *medium_id) {
                    m.resident_bytes += o.size;
                }
            }
        }

        let mut engine = Engine {
            config: config.clone(),
            policy,
            trace,
            intensity,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            devices,
            media,
            objects,
            object_replicas: BTreeMap::new(),
            pending: BTreeSet::new(),
            committed: BTreeMap::new(),
            outcomes: Vec::new(),
            memo: MemoCache::new(),
            solver_stats: SolverStats::default(),
            windows_solved: 0,
            exact_fallbacks: 0,
            window_index: 0,
            boundary_scheduled: false,
            interval_energy_base: 0.0,
            interval_device_base: BTreeMap::new(),
            interval_samples: Vec::new(),
            attributed: BTreeMap::new(),
            idle_carbon: BTreeMap::new(),
            operator_residual_j: 0.0,
            operator_carbon_g: 0.0,
            containers: Vec::new(),
            cold_start_total_us: 0,
            round_robin_cursor: 0,
            schedule: Vec::new(),
            telemetry: Vec::new(),
            unplaceable: BTreeSet::new(),
            rr_order: Vec::new(),
        };
        engine.outcomes = vec![FnOutcome::default(); engine.trace.len()];
        for o in &catalog.objects {
            if !o.replicas.is_empty() {
                engine
                    .object_replicas
                    .insert(o.id.clone(), o.replicas.clone());
            }
        }
        let mut rr: Vec<usize> = (0..engine.devices.len()).collect();
        rr.sort_by(|&a, &b| engine.devices[a].device.id.cmp(&engine.devices[b].device.id));
        engine.rr_order = rr;

        for i in 0..engine.trace.len() {
            let t = engine.trace[i].arrival_us;
            engine.push(t, EventKind::Arrival { fidx: i });
        }
        let intensity_events: Vec<(u64, f64)> =
            engine.intensity.samples.iter().skip(1).copied().collect();
        for (t, v) in intensity_events {
            engine.push(t, EventKind::IntensityChange { value: v });
        }
        engine.push(0, EventKind::WindowBoundary);
        engine.boundary_scheduled = true;
        Ok(engine)
    }

    fn push(&mut self, time: u64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Event { time, kind, seq });
    }

    fn run_loop(&mut self) {
        while let Some(ev) = self.queue.pop() {
            assert!(
                ev.time >= self.now,
                "event-queue inversion: event at {} behind clock {} ({:?})",
                ev.time,
                self.now,
                ev.kind
            );
            self.now = ev.time;
            match ev.kind {
                EventKind::Arrival { fidx } => self.on_arrival(fidx),
                EventKind::WindowBoundary => self.on_boundary(),
                EventKind::Start { fidx, device } => self.on_start(fidx, device),
                EventKind::Completion { fidx, device } => self.on_completion(fidx, device),
                EventKind::IntensityChange { .. } => {}
                EventKind::Custom { container } => self.on_container_expiry(container),
            }
        }
    }

    fn on_arrival(&mut self, fidx: usize) {
        if self.policy == PolicyKind::FaasBaseline {
            self.faas_dispatch(fidx);
            return;
        }
        self.pending.insert(fidx);
        if !self.boundary_scheduled {
            let w = self.config.window_length_us;
            let next = (self.now / w + 1) * w;
            self.push(next, EventKind::WindowBoundary);
            self.boundary_scheduled = true;
            self.window_index = next / w;
        }
    }

    // -- windowed policies ---------------------------------------------------

    fn on_boundary(&mut self) {
        self.close_ledger_interval();
        let window = self.window_index;

        if self.policy != PolicyKind::FaasBaseline && !self.pending.is_empty() {
            let admitted = self.admit();
            if !admitted.is_empty() {
                self.place_and_commit(window, &admitted);
            }
        }
        if self.config.power_gating {
            self.apply_power_gating();
        }

        // Continue windows while anything is outstanding or the horizon is
        // not yet covered.
        let horizon = self.config.horizon_us.unwrap_or(0);
        let w = self.config.window_length_us;
        let more_work = !self.pending.is_empty()
            || self.queue.iter().any(|e| {
                matches!(
                    e.kind,
                    EventKind::Arrival { .. }
                        | EventKind::Start { .. }
                        | EventKind::Completion { .. }
                )
            })
            || self.now + w < horizon;
        if more_work {
            self.window_index += 1;
            self.push(self.now + w, EventKind::WindowBoundary);
        } else {
            self.boundary_scheduled = false;
        }
    }

    /// Slack-based admission (or admit-all for the no-defer baselines).
    fn admit(&mut self) -> Vec<usize> {
        let pending: Vec<usize> = self.pending.iter().copied().collect();
        let admit_all = matches!(self.policy, PolicyKind::RoundRobin | PolicyKind::NoDefer);
        let admitted: Vec<usize> = if admit_all {
            pending.clone()
        } else {
            let refs: Vec<&MicroFunction> = pending.iter().map(|&i| &self.trace[i]).collect();
            let best = |f: &MicroFunction| self.best_duration(f);
            let lookahead = if self.config.carbon_aware_deferral {
                Some(&self.intensity)
            } else {
                None
            };
            let part = partition(
                &refs,
                self.now,
                self.config.window_length_us,
                &best,
                lookahead,
            );
            part.admit.iter().map(|&i| pending[i]).collect()
        };
        for &fidx in &admitted {
            self.pending.remove(&fidx);
        }
        admitted
    }

    /// Optimistic best-case duration of a function across all devices,
    /// using each accessed object's fastest available location.
    fn best_duration(&self, f: &MicroFunction) -> Option<u64> {
        let mut best: Option<u64> = None;
        for d in &self.devices {
            let Some(speedup) = f.speedup.get(&d.device.kind) else {
                continue;
            };
            let mut dur = (f.work / (d.device.capacity * speedup) * 1e6).ceil() as u64;
            for a in f.reads.iter().chain(f.writes.iter()) {
                let obj = &self.objects[&a.object_id];
                let m = self
                    .media
                    .iter()
                    .find(|m| m.medium.id == obj.home)
                    .expect("object home exists");
                dur += m.medium.access_time(a.bytes);
            }
            best = Some(best.map_or(dur, |b| b.min(dur)));
        }
        best
    }

    fn build_problem(&self, admitted: &[usize]) -> PlacementProblem {
        let w = self.config.window_length_us;
        let devices: Vec<DeviceSlot> = self
            .devices
            .iter()
            .map(|d| {
                let wake = if d.gated {
                    self.now + d.device.startup_latency
                } else {
                    0
                };
                DeviceSlot {
                    device: d.device.clone(),
                    available_from: d.busy_until.max(wake).max(self.now),
                    configured_app: d.configured_app.clone(),
                }
            })
            .collect();
        let media: Vec<MediumSlot> = self
            .media
            .iter()
            .map(|m| MediumSlot {
                medium: m.medium.clone(),
                bytes_budget: (m.medium.bandwidth * us_to_sec(w)) as u64,
            })
            .collect();
        let mut object_locations: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for o in self.objects.values() {
            let mut locs = BTreeSet::from([o.home.clone()]);
            if let Some(reps) = self.object_replicas.get(&o.id) {
                locs.extend(reps.iter().cloned());
            }
            object_locations.insert(o.id.clone(), locs);
        }
        PlacementProblem {
            functions: admitted.iter().map(|&i| self.trace[i].clone()).collect(),
            devices,
            media,
            object_locations,
            now: self.now,
            window_end: self.now + w,
            params: CostParams {
                network_j_per_byte: self.config.network_j_per_byte,
                sla_mode: self.config.sla_mode,
            },
        }
    }

    fn place_and_commit(&mut self, window: u64, admitted: &[usize]) {
        let problem = self.build_problem(admitted);
        let assignment = match self.solve(&problem) {
            Ok(a) => a,
            Err(e) => {
                // A window that cannot be solved at all marks every admitted
                // function as a violation and moves on.
                eprintln!("window {window}: placement failed: {e}");
                for &fidx in admitted {
                    self.unplaceable.insert(fidx);
                    self.outcomes[fidx].violated = true;
                    let f = &self.trace[fidx];
                    self.schedule.push(ScheduleRow {
                        function_id: f.id.clone(),
                        app_id: f.app_id.clone(),
                        window,
                        device_id: String::new(),
                        start_us: self.now,
                        end_us: self.now,
                        energy_j: 0.0,
                        carbon_g: 0.0,
                        violated: true,
                    });
                }
                return;
            }
        };
        self.windows_solved += 1;
        self.commit(window, admitted, &assignment);
    }

    fn solve(&mut self, problem: &PlacementProblem) -> Result<Assignment> {
        match (self.policy, self.config.solver) {
            (PolicyKind::RoundRobin, _) => self.solve_round_robin(problem),
            (PolicyKind::MufunctionExact, _) | (_, SolverKind::Exact) => {
                if problem.functions.len() <= self.config.exact_cutoff {
                    solve_exact_with_stats(problem, self.config.exact_cutoff, &mut self.solver_stats)
                } else {
                    self.exact_fallbacks += 1;
                    solve_heuristic_with_stats(problem, &mut self.memo, &mut self.solver_stats)
                }
            }
            _ => solve_heuristic_with_stats(problem, &mut self.memo, &mut self.solver_stats),
        }
    }

    /// Cyclic device choice over id-sorted devices; objects stay home.
    fn solve_round_robin(&mut self, problem: &PlacementProblem) -> Result<Assignment> {
        let mut picks: BTreeMap<String, (String, BTreeMap<String, String>)> = BTreeMap::new();
        let n = self.rr_order.len();
        for f in &problem.functions {
            let mut chosen = None;
            for step in 0..n {
                let didx = self.rr_order[(self.round_robin_cursor + step) % n];
                if f.speedup.contains_key(&self.devices[didx].device.kind) {
                    chosen = Some(didx);
                    self.round_robin_cursor = (self.round_robin_cursor + step + 1) % n;
                    break;
                }
            }
            if let Some(didx) = chosen {
                let media: BTreeMap<String, String> = f
                    .reads
                    .iter()
                    .chain(f.writes.iter())
                    .map(|a| (a.object_id.clone(), self.objects[&a.object_id].home.clone()))
                    .collect();
                picks.insert(
                    f.id.clone(),
                    (self.devices[didx].device.id.clone(), media),
                );
            }
        }
        commit_assignment(problem, &picks)
    }

    fn commit(&mut self, window: u64, admitted: &[usize], assignment: &Assignment) {
        let by_id: BTreeMap<String, usize> = admitted
            .iter()
            .map(|&i| (self.trace[i].id.clone(), i))
            .collect();
        // Wake gated devices that received work.
        let mut woken: BTreeSet<usize> = BTreeSet::new();
        for placement in assignment.placements.values() {
            let didx = self
                .devices
                .iter()
                .position(|d| d.device.id == placement.device_id)
                .expect("placement device exists");
            if self.devices[didx].gated && !woken.contains(&didx) {
                self.wake_device(didx);
                woken.insert(didx);
            }
        }

        for (fid, placement) in &assignment.placements {
            let fidx = by_id[fid];
            let didx = self
                .devices
                .iter()
                .position(|d| d.device.id == placement.device_id)
                .unwrap();
            let media: BTreeMap<String, usize> = placement
                .media_choice
                .iter()
                .map(|(o, m)| {
                    (
                        o.clone(),
                        self.media.iter().position(|ms| ms.medium.id == *m).unwrap(),
                    )
                })
                .collect();
            self.committed.insert(
                fidx,
                Committed {
                    start: placement.start_us,
                    window,
                    media,
                    marginal_energy_j: placement.cost.total,
                    flagged: !placement.feasible,
                },
            );
            self.devices[didx].busy_until = self.devices[didx].busy_until.max(placement.end_us);
            self.push(
                placement.start_us,
                EventKind::Start {
                    fidx,
                    device: didx,
                },
            );
            self.push(
                placement.end_us,
                EventKind::Completion {
                    fidx,
                    device: didx,
                },
            );
        }

        // FPGA configuration after this window's packed sequence: the app of
        // the last-ending placement on each FPGA.
        for didx in 0..self.devices.len() {
            if self.devices[didx].device.kind != DeviceKind::FPGA {
                continue;
            }
            let device_id = self.devices[didx].device.id.clone();
            let last = assignment
                .placements
                .iter()
                .filter(|(_, p)| p.device_id == device_id)
                .max_by_key(|(_, p)| p.end_us);
            if let Some((fid, _)) = last {
                let fidx = by_id[fid];
                let app = self.trace[fidx].app_id.clone();
                self.devices[didx].configured_app = Some(app);
            }
        }

        // Functions the solver could not place at all.
        for &fidx in admitted {
            if !self.committed.contains_key(&fidx) && !self.unplaceable.contains(&fidx) {
                self.unplaceable.insert(fidx);
                self.outcomes[fidx].violated = true;
                let f = &self.trace[fidx];
                self.schedule.push(ScheduleRow {
                    function_id: f.id.clone(),
                    app_id: f.app_id.clone(),
                    window,
                    device_id: String::new(),
                    start_us: self.now,
                    end_us: self.now,
                    energy_j: 0.0,
                    carbon_g: 0.0,
                    violated: true,
                });
            }
        }
    }

    // -- execution -----------------------------------------------------------

    fn on_start(&mut self, fidx: usize, didx: usize) {
        if self.policy == PolicyKind::FaasBaseline {
            return; // containers already hold their reservation
        }
        let d = &mut self.devices[didx];
        assert!(
            !d.gated,
            "start on gated device '{}' at {} (function {fidx})",
            d.device.id, self.now
        );
        assert!(
            d.utilization == 0.0,
            "device '{}' oversubscribed at {}: utilization {} on start of {}",
            d.device.id,
            self.now,
            d.utilization,
            self.trace[fidx].id
        );
        d.set_utilization(self.now, 1.0);
    }

    fn on_completion(&mut self, fidx: usize, didx: usize) {
        let committed = self.committed[&fidx].clone();
        if self.policy != PolicyKind::FaasBaseline {
            self.devices[didx].set_utilization(self.now, 0.0);
        }

        // Data movement energy lands on the chosen media as impulses.
        let f = &self.trace[fidx];
        let mut bytes_total = 0u64;
        let mut bytes_remote = 0u64;
        for a in f.reads.iter().chain(f.writes.iter()) {
            let mi = committed.media.get(&a.object_id).copied().unwrap_or_else(|| {
                let home = &self.objects[&a.object_id].home;
                self.media
                    .iter()
                    .position(|m| m.medium.id == *home)
                    .unwrap()
            });
            let m = &mut self.media[mi];
            m.advance(self.now);
            m.energy_j += m.medium.transfer_energy(a.bytes);
            if m.medium.remote_access_penalty > 0 {
                m.energy_j += self.config.network_j_per_byte * a.bytes as f64;
                bytes_remote += a.bytes;
            }
            bytes_total += a.bytes;
        }

        // Telemetry for the ledger.
        let duration_sec = us_to_sec(self.now.saturating_sub(committed.start));
        let is_cpu = self.devices[didx].device.kind == DeviceKind::CPU;
        let cycles = f.work * 1_000.0;
        let resident: f64 = f
            .reads
            .iter()
            .chain(f.writes.iter())
            .map(|a| self.objects[&a.object_id].size as f64 * duration_sec)
            .sum();
        let sample = TelemetrySample {
            function_id: f.id.clone(),
            device_id: self.devices[didx].device.id.clone(),
            features: BTreeMap::from([
                ("cpu_cycles".to_string(), if is_cpu { cycles } else { 0.0 }),
                (
                    "accelerator_cycles".to_string(),
                    if is_cpu { 0.0 } else { cycles },
                ),
                ("network_bytes".to_string(), bytes_remote as f64),
                ("storage_bytes_moved".to_string(), bytes_total as f64),
                ("byte_seconds_resident".to_string(), resident),
            ]),
        };
        let direct_estimate = match &self.config.attribution_model {
            Some(model) => estimate_energy(model, &sample).unwrap_or(committed.marginal_energy_j),
            None => committed.marginal_energy_j,
        };
        self.interval_samples.push((fidx, sample, direct_estimate));

        // Outcome bookkeeping.
        let deadline = f.deadline_abs();
        let violated = committed.flagged || self.now > deadline;
        let carbon_t = match self.config.carbon_timing {
            CarbonTiming::Completion => self.now,
            CarbonTiming::Start => committed.start,
        };
        let carbon = committed.marginal_energy_j / JOULES_PER_KWH
            * intensity_at(&self.intensity, carbon_t).unwrap_or(0.0);
        let out = &mut self.outcomes[fidx];
        out.completed_at = Some(self.now);
        out.violated = violated;
        out.energy_j = committed.marginal_energy_j;
        out.carbon_g = carbon;

        self.schedule.push(ScheduleRow {
            function_id: f.id.clone(),
            app_id: f.app_id.clone(),
            window: committed.window,
            device_id: self.devices[didx].device.id.clone(),
            start_us: committed.start,
            end_us: self.now,
            energy_j: committed.marginal_energy_j,
            carbon_g: carbon,
            violated,
        });
    }

    // -- FaaS baseline --------------------------------------------------------

    fn faas_dispatch(&mut self, fidx: usize) {
        let f = self.trace[fidx].clone();
        let Some(speedup) = f.speedup.get(&DeviceKind::CPU).copied() else {
            // FaaS runs only on CPUs.
            self.unplaceable.insert(fidx);
            self.outcomes[fidx].violated = true;
            self.schedule.push(ScheduleRow {
                function_id: f.id.clone(),
                app_id: f.app_id.clone(),
                window: self.now / self.config.window_length_us,
                device_id: String::new(),
                start_us: self.now,
                end_us: self.now,
                energy_j: 0.0,
                carbon_g: 0.0,
                violated: true,
            });
            return;
        };
        let share = self.config.faas.container_share;

        // Prefer the warm container of this app that frees up first.
        let mut best_warm: Option<(u64, usize)> = None;
        for (ci, c) in self.containers.iter().enumerate() {
            if c.alive && c.app == f.app_id && c.warm_until > self.now {
                let key = (c.busy_until, ci);
                if best_warm.map(|b| key < b).unwrap_or(true) {
                    best_warm = Some(key);
                }
            }
        }
        // A cold container is possible on any CPU with spare reserve.
        let mut cold_device: Option<usize> = None;
        for &didx in &self.rr_order {
            let d = &self.devices[didx];
            if d.device.kind != DeviceKind::CPU {
                continue;
            }
            let reserved: f64 = self
                .containers
                .iter()
                .filter(|c| c.alive && c.device == didx)
                .map(|_| share)
                .sum();
            if reserved + share <= 1.0 + 1e-9 {
                cold_device = Some(didx);
                break;
            }
        }

        let (container_idx, exec_from, cold) = match best_warm {
            Some((busy_until, ci)) if busy_until <= self.now || cold_device.is_none() => {
                (ci, busy_until.max(self.now), false)
            }
            _ => match cold_device {
                Some(didx) => {
                    let d = &mut self.devices[didx];
                    d.set_utilization(self.now, (d.utilization + share).min(1.0));
                    self.containers.push(Container {
                        app: f.app_id.clone(),
                        device: didx,
                        busy_until: self.now,
                        warm_until: self.now + self.config.faas.cold_start_us,
                        alive: true,
                    });
                    self.cold_start_total_us += self.config.faas.cold_start_us;
                    (
                        self.containers.len() - 1,
                        self.now + self.config.faas.cold_start_us,
                        true,
                    )
                }
                None => {
                    // No capacity anywhere: queue on the earliest warm
                    // container of the app, or violate outright.
                    match best_warm {
                        Some((busy_until, ci)) => (ci, busy_until.max(self.now), false),
                        None => {
                            self.unplaceable.insert(fidx);
                            self.outcomes[fidx].violated = true;
                            self.schedule.push(ScheduleRow {
                                function_id: f.id.clone(),
                                app_id: f.app_id.clone(),
                                window: self.now / self.config.window_length_us,
                                device_id: String::new(),
                                start_us: self.now,
                                end_us: self.now,
                                energy_j: 0.0,
                                carbon_g: 0.0,
                                violated: true,
                            });
                            return;
                        }
                    }
                }
            },
        };

        let didx = self.containers[container_idx].device;
        let capacity = self.devices[didx].device.capacity;
        let mut duration =
            (f.work / (share * capacity * speedup) * 1e6).ceil() as u64;
        for a in f.reads.iter().chain(f.writes.iter()) {
            let home = &self.objects[&a.object_id].home;
            let m = self.media.iter().find(|m| m.medium.id == *home).unwrap();
            duration += m.medium.access_time(a.bytes);
        }
        let start = exec_from;
        let end = start + duration;
        let c = &mut self.containers[container_idx];
        c.busy_until = end;
        c.warm_until = end + self.config.faas.keepalive_us;
        let warm_until = c.warm_until;
        self.push(warm_until, EventKind::Custom { container: container_idx });

        // Marginal energy of the execution inside the reservation.
        let active_span = self.devices[didx].device.active_power_span();
        let mut marginal = active_span * share * us_to_sec(end - start);
        let mut media_map = BTreeMap::new();
        for a in f.reads.iter().chain(f.writes.iter()) {
            let home = &self.objects[&a.object_id].home;
            let mi = self.media.iter().position(|m| m.medium.id == *home).unwrap();
            marginal += self.media[mi].medium.transfer_energy(a.bytes);
            if self.media[mi].medium.remote_access_penalty > 0 {
                marginal += self.config.network_j_per_byte * a.bytes as f64;
            }
            media_map.insert(a.object_id.clone(), mi);
        }
        self.committed.insert(
            fidx,
            Committed {
                start,
                window: self.now / self.config.window_length_us,
                media: media_map,
                marginal_energy_j: marginal,
                flagged: cold && self.config.faas.cold_start_us > f.sla.deadline_us,
            },
        );
        self.push(start, EventKind::Start { fidx, device: didx });
        self.push(end, EventKind::Completion { fidx, device: didx });
    }

    fn on_container_expiry(&mut self, ci: usize) {
        let c = &self.containers[ci];
        if !c.alive || c.warm_until > self.now {
            return; // stale event: the container was re-used
        }
        let didx = c.device;
        let share = self.config.faas.container_share;
        self.containers[ci].alive = false;
        let d = &mut self.devices[didx];
        d.set_utilization(self.now, (d.utilization - share).max(0.0));
    }

    // -- power gating ----------------------------------------------------------

    /// Gate devices with no running or committed work and nothing imminent.
    /// Pre (checked): no committed work overlaps the gated stretch; no
    /// pending function's latest feasible start falls inside it (with the
    /// wake latency as margin).
    fn apply_power_gating(&mut self) {
        let window_end = self.now + self.config.window_length_us;
        let pending: Vec<usize> = self.pending.iter().copied().collect();
        for didx in 0..self.devices.len() {
            let d = &self.devices[didx];
            if d.gated || d.busy_until > self.now || d.utilization > 0.0 {
                continue;
            }
            let margin = d.device.startup_latency;
            let mut needed_soon = false;
            for &fidx in &pending {
                let f = &self.trace[fidx];
                if let Some(dur) = self.best_duration(f) {
                    let lfs = latest_feasible_start(f, dur);
                    if lfs < (window_end + margin) as i64 {
                        needed_soon = true;
                        break;
                    }
                } else {
                    needed_soon = true;
                    break;
                }
            }
            if !needed_soon {
                self.power_gate(didx);
            }
        }
    }

    /// Engine-internal: gate one device from `now` until woken. Gating a
    /// device with committed work is an internal invariant violation.
    fn power_gate(&mut self, didx: usize) {
        let d = &mut self.devices[didx];
        assert!(
            d.busy_until <= self.now && d.utilization == 0.0,
            "power-gating device '{}' with committed work at {} (busy_until {}, util {})",
            d.device.id,
            self.now,
            d.busy_until,
            d.utilization
        );
        d.advance(self.now);
        d.gated = true;
    }

    fn wake_device(&mut self, didx: usize) {
        let startup_energy = self.devices[didx].device.startup_energy;
        let d = &mut self.devices[didx];
        d.advance(self.now);
        d.gated = false;
        d.energy_j += startup_energy;
        d.busy_until = d.busy_until.max(self.now + d.device.startup_latency);
    }

    // -- provenance ledger -----------------------------------------------------

    fn total_energy_now(&self) -> f64 {
        self.devices.iter().map(|d| d.energy_j).sum::<f64>()
            + self.media.iter().map(|m| m.energy_j).sum::<f64>()
    }

    fn close_ledger_interval(&mut self) {
        for d in &mut self.devices {
            d.advance(self.now);
        }
        for m in &mut self.media {
            m.advance(self.now);
        }
        let measured = self.total_energy_now() - self.interval_energy_base;
        self.interval_energy_base = self.total_energy_now();

        // The engine's own estimates are authoritative: identity model over
        // a synthetic per-function feature carrying the estimate itself.
        let estimates: BTreeMap<String, f64> = {
            let mut m: BTreeMap<String, f64> = BTreeMap::new();
            for (fidx, _, est) in &self.interval_samples {
                *m.entry(self.trace[*fidx].id.clone()).or_insert(0.0) += est;
            }
            m
        };
        let attribution = attribute_with_estimates(
            &estimates,
            measured,
            self.config.idle_attribution,
        );

        // Telemetry export rows: per (window, device) aggregation.
        let mut per_device: BTreeMap<String, TelemetryRow> = BTreeMap::new();
        for (_, s, _) in &self.interval_samples {
            let row = per_device
                .entry(s.device_id.clone())
                .or_insert_with(|| TelemetryRow {
                    window: self.window_index,
                    device_id: s.device_id.clone(),
                    cpu_cycles: 0.0,
                    accelerator_cycles: 0.0,
                    network_bytes: 0.0,
                    storage_bytes_moved: 0.0,
                    byte_seconds_resident: 0.0,
                    measured_j: 0.0,
                });
            row.cpu_cycles += s.features["cpu_cycles"];
            row.accelerator_cycles += s.features["accelerator_cycles"];
            row.network_bytes += s.features["network_bytes"];
            row.storage_bytes_moved += s.features["storage_bytes_moved"];
            row.byte_seconds_resident += s.features["byte_seconds_resident"];
        }
        if !per_device.is_empty() {
            // This interval's device energy is the fitting label.
            for (id, row) in &mut per_device {
                if let Some(d) = self.devices.iter().find(|d| d.device.id == *id) {
                    let base = self.interval_device_base.get(id).copied().unwrap_or(0.0);
                    row.measured_j = d.energy_j - base;
                }
            }
            self.telemetry.extend(per_device.into_values());
        }
        for d in &self.devices {
            self.interval_device_base
                .insert(d.device.id.clone(), d.energy_j);
        }

        let close_intensity = intensity_at(&self.intensity, self.now).unwrap_or(0.0);
        let by_id: BTreeMap<&str, usize> = self
            .trace
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.as_str(), i))
            .collect();
        for (fid, (direct, idle)) in &attribution.0 {
            let fidx = by_id[fid.as_str()];
            let e = self.attributed.entry(fidx).or_insert((0.0, 0.0));
            e.0 += direct;
            e.1 += idle;
            *self.idle_carbon.entry(fidx).or_insert(0.0) +=
                idle / JOULES_PER_KWH * close_intensity;
        }
        self.operator_residual_j += attribution.1;
        self.operator_carbon_g += attribution.1 / JOULES_PER_KWH * close_intensity;
        self.interval_samples.clear();
    }

    // -- finalization -----------------------------------------------------------

    fn finalize(mut self) -> RunResult {
        let horizon = self
            .config
            .horizon_us
            .unwrap_or(0)
            .max(self.now)
            .max(self.devices.iter().map(|d| d.busy_until).max().unwrap_or(0));
        self.now = horizon;
        self.close_ledger_interval();

        let embodied: f64 = self
            .devices
            .iter()
            .map(|d| d.device.embodied_rate * us_to_sec(horizon))
            .sum();

        // Provenance records with call-graph rollup.
        let mut records: BTreeMap<String, ProvenanceRecord> = BTreeMap::new();
        for (fidx, f) in self.trace.iter().enumerate() {
            let (direct, idle) = self.attributed.get(&fidx).copied().unwrap_or((0.0, 0.0));
            let idle_carbon = self.idle_carbon.get(&fidx).copied().unwrap_or(0.0);
            records.insert(
                f.id.clone(),
                ProvenanceRecord {
                    function_id: f.id.clone(),
                    app_id: f.app_id.clone(),
                    direct_energy: direct,
                    idle_share: idle,
                    descendant_energy: 0.0,
                    carbon: self.outcomes[fidx].carbon_g + idle_carbon,
                },
            );
        }
        let parents: BTreeMap<String, String> = self
            .trace
            .iter()
            .filter_map(|f| f.parent.clone().map(|p| (f.id.clone(), p)))
            .collect();
        let records = aggregate_provenance(&records, &parents)
            .expect("trace validation already rejected cyclic call graphs");

        // SLA accounting: hard deadlines count every miss; tail targets
        // (percentile < 1) are fleet statistics per (app, percentile) group
        // with an allowance of floor((1-p)·n) misses.
        let mut sla_violations = 0u64;
        let mut groups: BTreeMap<(String, u64), (u64, u64)> = BTreeMap::new();
        for (fidx, f) in self.trace.iter().enumerate() {
            let missed = self.outcomes[fidx].violated || self.outcomes[fidx].completed_at.is_none();
            if (f.sla.percentile - 1.0).abs() < 1e-12 {
                if missed {
                    sla_violations += 1;
                }
            } else {
                let key = (f.app_id.clone(), (f.sla.percentile * 1e9) as u64);
                let g = groups.entry(key).or_insert((0, 0));
                g.0 += 1;
                if missed {
                    g.1 += 1;
                }
            }
        }
        for ((_, p_scaled), (n, misses)) in &groups {
            let p = *p_scaled as f64 / 1e9;
            let allowance = ((1.0 - p) * *n as f64).floor() as u64;
            sla_violations += misses.saturating_sub(allowance);
        }

        let mut energy_budget_violations = 0u64;
        let mut carbon_budget_violations = 0u64;
        for (fidx, f) in self.trace.iter().enumerate() {
            if let Some(budget) = f.energy_budget_j {
                if self.outcomes[fidx].energy_j > budget {
                    energy_budget_violations += 1;
                }
            }
            if let Some(budget) = f.sla.carbon_budget_g {
                if self.outcomes[fidx].carbon_g > budget {
                    carbon_budget_violations += 1;
                }
            }
        }

        let total_energy: f64 = self.total_energy_now();
        let operational_carbon: f64 = records.values().map(|r| r.carbon).sum::<f64>()
            + self.operator_carbon_g;

        let mut per_app: BTreeMap<String, AppRollup> = BTreeMap::new();
        for r in records.values() {
            let roll = per_app.entry(r.app_id.clone()).or_default();
            roll.functions += 1;
            roll.direct_j += r.direct_energy;
            roll.idle_share_j += r.idle_share;
            roll.carbon_g += r.carbon;
        }

        let completed = self
            .outcomes
            .iter()
            .filter(|o| o.completed_at.is_some())
            .count() as u64;
        let functions_total = self.trace.len() as u64;

        self.schedule.sort_by(|a, b| {
            (a.window, a.function_id.as_str()).cmp(&(b.window, b.function_id.as_str()))
        });
        self.telemetry
            .sort_by(|a, b| (a.window, a.device_id.as_str()).cmp(&(b.window, b.device_id.as_str())));

        let metrics = Metrics {
            policy: self.policy.as_str().to_string(),
            seed: self.config.seed,
            horizon_us: horizon,
            functions_total,
            functions_completed: completed,
            sla_violations,
            sla_violation_rate: if functions_total > 0 {
                sla_violations as f64 / functions_total as f64
            } else {
                0.0
            },
            energy_budget_violations,
            carbon_budget_violations,
            total_energy_j: total_energy,
            operational_carbon_g: operational_carbon,
            embodied_carbon_g: embodied,
            total_carbon_g: operational_carbon + embodied,
            operator_residual_j: self.operator_residual_j,
            cold_start_time_total_us: self.cold_start_total_us,
            device_energy_j: self
                .devices
                .iter()
                .map(|d| (d.device.id.clone(), d.energy_j))
                .collect(),
            media_energy_j: self
                .media
                .iter()
                .map(|m| (m.medium.id.clone(), m.energy_j))
                .collect(),
            device_utilization: self
                .devices
                .iter()
                .map(|d| {
                    let u = if horizon > 0 {
                        d.busy_weighted_us / horizon as f64
                    } else {
                        0.0
                    };
                    (d.device.id.clone(), u)
                })
                .collect(),
            per_app,
            solver: SolverRollup {
                windows: self.windows_solved,
                exact_fallbacks: self.exact_fallbacks,
                nodes_expanded: self.solver_stats.nodes_expanded,
                cache_hits: self.memo.hits,
                cache_misses: self.memo.misses,
            },
        };

        RunResult {
            metrics,
            provenance: records,
            schedule: self.schedule,
            telemetry: self.telemetry,
        }
    }
}

/// Interval attribution over pre-computed per-function estimates:
/// (per-function (direct, idle_share), operator residual).
fn attribute_with_estimates(
    estimates: &BTreeMap<String, f64>,
    measured: f64,
    mode: IdleAttribution,
) -> (BTreeMap<String, (f64, f64)>, f64) {
    // Reuse the provenance ledger through an identity model: one feature
    // per direct estimate keeps the distribution logic in one place.
    let model = AttributionModel {
        coefficients: BTreeMap::from([("direct_j".to_string(), 1.0)]),
        baseline: 0.0,
    };
    let samples: Vec<TelemetrySample> = estimates
        .iter()
        .map(|(fid, est)| TelemetrySample {
            function_id: fid.clone(),
            device_id: String::new(),
            features: BTreeMap::from([("direct_j".to_string(), *est)]),
        })
        .collect();
    let out = attribute_interval(&model, &samples, measured, mode)
        .expect("identity model accepts its own samples");
    (out.per_function, out.operator_residual)
}
