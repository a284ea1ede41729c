//! Per-window assignment optimization: place each pending μfunction on one
//! compute device and choose a medium for each data object it touches,
//! minimizing total marginal energy subject to deadline feasibility and
//! per-medium data-movement budgets.
//!
//! Functions are assigned integrally (one device runs the whole function),
//! which makes this a generalized-assignment problem; the multi-commodity
//! flow view survives as the fractional [`lower_bound`]. Within a device,
//! admitted functions execute serially in earliest-deadline-first order, so
//! an assignment is feasible exactly when every device's EDF packing meets
//! every deadline and no medium's byte budget is exceeded.
//!
//! Solvers: [`solve_exact`] (branch-and-bound, plain enumeration on small
//! instances), [`solve_heuristic`] (greedy by ascending best-edge cost with
//! a memoization cache reused across windows), and [`lower_bound`] (the
//! fractional relaxation value).

mod solve;

pub use solve::{
    commit_assignment, lower_bound, pareto_sweep, solve_exact, solve_exact_with_stats,
    solve_heuristic, solve_heuristic_with_stats, MemoCache, SolverStats, DEFAULT_EXACT_CUTOFF,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hardware::{ComputeDevice, DeviceKind, StorageMedium};
use crate::units::US_PER_SEC;
use crate::workload::MicroFunction;

/// Penalty charged per deadline violation in scalar objectives, joules.
///
/// Large enough to dominate any physical instance energy, so minimizing the
/// penalized scalar is equivalent to minimizing (violations, energy)
/// lexicographically.
pub const VIOLATION_PENALTY_J: f64 = 1e12;

/// Cost-model knobs shared by all solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// NIC/switch energy per byte for accesses that cross the
    /// disaggregation fabric (media with a nonzero remote penalty).
    pub network_j_per_byte: f64,
    /// Hard deadlines filter edges; soft mode prices lateness instead.
    pub sla_mode: SlaMode,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            network_j_per_byte: 1e-9,
            sla_mode: SlaMode::Hard,
        }
    }
}

/// How deadline violations are treated during placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SlaMode {
    /// Deadline-violating edges are excluded; unplaceable functions are
    /// flagged and run best-effort.
    Hard,
    /// Every edge is allowed; lateness costs `penalty_j_per_us` joules/µs.
    Soft { penalty_j_per_us: f64 },
}

/// A compute device's state within the scheduling window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSlot {
    pub device: ComputeDevice,
    /// Earliest instant new work can start: carryover from functions still
    /// executing, or the wake time of a power-gated device. The residual
    /// work-rate for the window is `capacity · free_fraction`, where
    /// `free_fraction` is the part of the window at or after this instant.
    pub available_from: u64,
    /// For FPGAs: the app the fabric is currently configured for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configured_app: Option<String>,
}

impl DeviceSlot {
    pub fn new(device: ComputeDevice) -> Self {
        DeviceSlot {
            device,
            available_from: 0,
            configured_app: None,
        }
    }

    /// Residual capacity over `[now, window_end)`, work-units per second.
    pub fn residual_capacity(&self, now: u64, window_end: u64) -> f64 {
        if window_end <= now {
            return 0.0;
        }
        let free_from = self.available_from.max(now).min(window_end);
        let free_fraction = (window_end - free_from) as f64 / (window_end - now) as f64;
        self.device.capacity * free_fraction
    }

    fn needs_reconfig(&self, app_id: &str) -> bool {
        self.device.kind == DeviceKind::FPGA
            && self.configured_app.as_deref() != Some(app_id)
    }
}

/// A storage medium's data-movement budget within the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumSlot {
    pub medium: StorageMedium,
    /// Bytes that may still be moved through this medium this window.
    pub bytes_budget: u64,
}

impl MediumSlot {
    /// A slot with an effectively unconstrained budget.
    pub fn unbounded(medium: StorageMedium) -> Self {
        MediumSlot {
            medium,
            bytes_budget: u64::MAX / 4,
        }
    }
}

/// One optimization instance: the pending functions of a window, the
/// devices and media with their residual state, and where each data object
/// currently lives (edge presence = availability of the data for reading).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub functions: Vec<MicroFunction>,
    pub devices: Vec<DeviceSlot>,
    pub media: Vec<MediumSlot>,
    /// object id → media ids holding a copy.
    pub object_locations: BTreeMap<String, BTreeSet<String>>,
    pub now: u64,
    pub window_end: u64,
    #[serde(default)]
    pub params: CostParams,
}

impl PlacementProblem {
    /// Serialize for reproducing solver behavior offline.
    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serialization cannot fail")
    }

    pub fn load_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SimError::Validation(format!("problem: {e}")))
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for f in &self.functions {
            errs.extend(f.validate());
            for a in f.reads.iter().chain(f.writes.iter()) {
                match self.object_locations.get(&a.object_id) {
                    Some(locs) if !locs.is_empty() => {}
                    _ => errs.push(format!(
                        "object '{}' read by '{}' has no location",
                        a.object_id, f.id
                    )),
                }
            }
        }
        for d in &self.devices {
            errs.extend(d.device.validate());
        }
        for m in &self.media {
            errs.extend(m.medium.validate());
        }
        if self.window_end < self.now {
            errs.push("window_end precedes now".to_string());
        }
        errs
    }
}

/// Marginal energy of one candidate placement edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCost {
    /// Device busy-time energy above idle, plus any reconfiguration energy.
    pub compute_energy: f64,
    /// Medium transfer energy plus network energy for remote accesses.
    pub data_energy: f64,
    pub total: f64,
}

impl EdgeCost {
    fn new(compute_energy: f64, data_energy: f64) -> Self {
        EdgeCost {
            compute_energy,
            data_energy,
            total: compute_energy + data_energy,
        }
    }
}

/// Chosen medium per accessed object.
pub type MediaChoice<'a> = BTreeMap<&'a str, &'a StorageMedium>;

/// Wall-clock the function occupies the device, µs: compute time at the
/// device's profiled speedup plus transfer and latency time per access.
/// Deterministic; uses tail access latency so deadline checks are
/// conservative.
pub fn effective_duration(
    f: &MicroFunction,
    d: &ComputeDevice,
    media: &MediaChoice<'_>,
) -> Result<u64> {
    let speedup = f.speedup.get(&d.kind).ok_or_else(|| {
        SimError::Domain(format!(
            "function '{}' has no speedup profile for {}",
            f.id,
            d.kind.as_str()
        ))
    })?;
    let compute_sec = f.work / (d.capacity * speedup);
    let mut total = (compute_sec * US_PER_SEC as f64).ceil() as u64;
    for (object_id, bytes) in object_bytes(f) {
        let medium = media.get(object_id).ok_or_else(|| {
            SimError::Domain(format!("no medium chosen for object '{object_id}'"))
        })?;
        total += medium.access_time(bytes);
    }
    Ok(total)
}

/// Marginal energy of running `f` on this device with these media.
///
/// Compute energy prices the device at the utilization it reaches with the
/// function running: with the linear power curve the marginal power over
/// idle is `(1 − idle_fraction) · peak` for the full busy time. FPGA
/// placements add the reconfiguration energy when the fabric is not already
/// configured for the function's app this window.
pub fn edge_cost(
    f: &MicroFunction,
    slot: &DeviceSlot,
    media: &MediaChoice<'_>,
    params: &CostParams,
) -> Result<EdgeCost> {
    let (compute, data, _) = edge_cost_parts(f, &slot.device, media, params)?;
    let reconfig = if slot.needs_reconfig(&f.app_id) {
        slot.device.startup_energy
    } else {
        0.0
    };
    Ok(EdgeCost::new(compute + reconfig, data))
}

/// (compute energy without reconfiguration, data energy, duration µs).
pub(crate) fn edge_cost_parts(
    f: &MicroFunction,
    device: &ComputeDevice,
    media: &MediaChoice<'_>,
    params: &CostParams,
) -> Result<(f64, f64, u64)> {
    let duration_us = effective_duration(f, device, media)?;
    let compute = device.active_power_span() * duration_us as f64 / US_PER_SEC as f64;
    let mut data = 0.0;
    for (object_id, bytes) in object_bytes(f) {
        let medium = media.get(object_id).ok_or_else(|| {
            SimError::Domain(format!("no medium chosen for object '{object_id}'"))
        })?;
        data += medium.transfer_energy(bytes);
        if medium.remote_access_penalty > 0 {
            data += params.network_j_per_byte * bytes as f64;
        }
    }
    Ok((compute, data, duration_us))
}

/// Total bytes moved per object (reads and writes share one medium choice).
pub(crate) fn object_bytes(f: &MicroFunction) -> Vec<(&str, u64)> {
    let mut per_object: BTreeMap<&str, u64> = BTreeMap::new();
    for a in f.reads.iter().chain(f.writes.iter()) {
        *per_object.entry(a.object_id.as_str()).or_insert(0) += a.bytes;
    }
    per_object.into_iter().collect()
}

/// One function's committed placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub device_id: String,
    pub start_us: u64,
    pub end_us: u64,
    /// object id → medium id.
    pub media_choice: BTreeMap<String, String>,
    pub cost: EdgeCost,
    /// Whether the placement meets the function's deadline.
    pub feasible: bool,
}

/// A complete solution to a [`PlacementProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// function id → placement.
    pub placements: BTreeMap<String, Placement>,
    /// Total energy, joules: the sum of placement edge costs in function-id
    /// order (recomputable from `placements`).
    pub total_cost: f64,
    /// Number of placements that miss their deadline.
    pub violations: usize,
}

impl Assignment {
    /// Scalar objective: energy plus a dominating penalty per violation.
    /// Minimizing this equals minimizing (violations, energy)
    /// lexicographically.
    pub fn objective(&self) -> f64 {
        self.total_cost + self.violations as f64 * VIOLATION_PENALTY_J
    }
}

/// One function queued on a device for packing.
#[derive(Debug, Clone, PartialEq)]
pub struct PackEntry {
    /// Caller-side index, echoed back in the packing result.
    pub key: usize,
    pub app_id: String,
    pub duration: u64,
    pub deadline_abs: u64,
    /// Flagged functions run after all deadline-constrained ones.
    pub best_effort: bool,
}

/// Result of sequencing one device's assigned set.
#[derive(Debug, Clone, PartialEq)]
pub struct DevicePacking {
    /// (start, end) per entry, in the order the entries were supplied.
    pub spans: Vec<(u64, u64)>,
    /// Number of FPGA reconfiguration events in the packed sequence.
    pub reconfig_events: usize,
    /// Entry indices (caller order) charged a reconfiguration energy: the
    /// first function to run after each reconfiguration.
    pub reconfig_charged: Vec<usize>,
}

/// Sequence a device's assigned set for the window.
///
/// Execution is serial at full device rate: deadline-constrained functions
/// run first in earliest-deadline order, then best-effort ones. On FPGAs,
/// functions of one app run contiguously; app groups run in lexicographic
/// app order and every switch to an app the fabric is not configured for
/// inserts the reconfiguration latency (and charges its energy to the first
/// function of the group). The group order is static so that adding work to
/// a device never lets an already-queued function start earlier.
pub fn pack_device_schedule(slot: &DeviceSlot, now: u64, entries: &[PackEntry]) -> DevicePacking {
    let is_fpga = slot.device.kind == DeviceKind::FPGA;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let ea = &entries[a];
        let eb = &entries[b];
        let group = |e: &PackEntry| {
            (
                e.best_effort,
                if is_fpga { e.app_id.clone() } else { String::new() },
            )
        };
        group(ea)
            .cmp(&group(eb))
            .then(ea.deadline_abs.cmp(&eb.deadline_abs))
            .then(ea.key.cmp(&eb.key))
    });

    let mut cursor = slot.available_from.max(now);
    let mut configured = slot.configured_app.clone();
    let mut spans = vec![(0u64, 0u64); entries.len()];
    let mut reconfig_events = 0;
    let mut reconfig_charged = Vec::new();
    for i in order {
        let e = &entries[i];
        if is_fpga && configured.as_deref() != Some(e.app_id.as_str()) {
            cursor += slot.device.startup_latency;
            configured = Some(e.app_id.clone());
            reconfig_events += 1;
            reconfig_charged.push(i);
        }
        let start = cursor;
        let end = start + e.duration;
        spans[i] = (start, end);
        cursor = end;
    }
    DevicePacking {
        spans,
        reconfig_events,
        reconfig_charged,
    }
}
