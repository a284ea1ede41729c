//! Units of work: μfunctions, their SLAs, data objects, and arrival traces.
//!
//! A μfunction is a microsecond-scale, resource-fungible invocation with an
//! already-profiled per-device-kind speedup map, a set of data-object
//! accesses, a deadline-based SLA and optional energy/carbon budgets. Traces
//! are ordered arrival streams; both generation and parsing are pure
//! functions of their inputs.

mod gen;
mod jsonl;

pub use gen::{generate_trace, AppProfile, Dist, ObjectSpec, TraceSpec};
pub use jsonl::{parse_trace, parse_trace_file, serialize_trace};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hardware::DeviceKind;

/// One data-object access: how many bytes a function reads or writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Access {
    pub object_id: String,
    pub bytes: u64,
}

/// Service-level agreement attached to a μfunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sla {
    /// Completion deadline relative to arrival, µs.
    pub deadline_us: u64,
    /// Tail target for fleet-level latency checks; 1.0 means a hard
    /// per-invocation deadline.
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_budget_g: Option<f64>,
}

fn default_percentile() -> f64 {
    1.0
}

impl Sla {
    pub fn hard(deadline_us: u64) -> Self {
        Sla {
            deadline_us,
            percentile: 1.0,
            carbon_budget_g: None,
        }
    }
}

/// A microsecond-scale unit of execution; the scheduler's unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroFunction {
    pub id: String,
    /// Application (commodity) the function belongs to.
    pub app_id: String,
    /// Arrival time, µs.
    pub arrival_us: u64,
    /// Work in reference-device work-units.
    pub work: f64,
    /// Profiled speedup per device kind; kinds absent here cannot run it.
    pub speedup: BTreeMap<DeviceKind, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reads: Vec<Access>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub writes: Vec<Access>,
    pub sla: Sla,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_budget_j: Option<f64>,
    /// Caller function id, when this invocation is an RPC child.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
}

impl MicroFunction {
    /// Absolute deadline, µs.
    pub fn deadline_abs(&self) -> u64 {
        self.arrival_us + self.sla.deadline_us
    }

    /// Every invariant violation for this function.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.work > 0.0) {
            errs.push(format!("function '{}': work must be > 0", self.id));
        }
        if self.speedup.is_empty() {
            errs.push(format!("function '{}': speedup map is empty", self.id));
        }
        for (kind, s) in &self.speedup {
            if !(*s > 0.0) {
                errs.push(format!(
                    "function '{}': speedup for {} must be > 0",
                    self.id,
                    kind.as_str()
                ));
            }
        }
        if self.sla.deadline_us == 0 {
            errs.push(format!("function '{}': sla.deadline_us must be > 0", self.id));
        }
        if !(self.sla.percentile > 0.0 && self.sla.percentile <= 1.0) {
            errs.push(format!(
                "function '{}': sla.percentile must be in (0, 1]",
                self.id
            ));
        }
        if self.parent.as_deref() == Some(self.id.as_str()) {
            errs.push(format!("function '{}': parent must differ from id", self.id));
        }
        for a in self.reads.iter().chain(self.writes.iter()) {
            if a.bytes == 0 {
                errs.push(format!(
                    "function '{}': access to '{}' must move > 0 bytes",
                    self.id, a.object_id
                ));
            }
        }
        errs
    }
}

/// A named data object and its current placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataObject {
    pub id: String,
    pub size: u64,
    /// Medium id the object currently resides on.
    pub home: String,
}

/// Schedulable headroom: `(arrival + deadline) − now − best_duration`, µs.
///
/// Negative slack means the function can no longer meet its deadline even on
/// the best device.
pub fn slack(f: &MicroFunction, now: u64, best_duration: u64) -> i64 {
    f.deadline_abs() as i64 - now as i64 - best_duration as i64
}

/// Validate a whole trace: per-function invariants, ordering, id uniqueness,
/// and acyclicity of the parent call graph. Returns every failure.
pub fn validate_trace(trace: &[MicroFunction]) -> Vec<String> {
    let mut errs = Vec::new();
    for f in trace {
        errs.extend(f.validate());
    }
    for w in trace.windows(2) {
        if w[1].arrival_us < w[0].arrival_us {
            errs.push(format!(
                "arrivals not sorted: '{}' at {} follows '{}' at {}",
                w[1].id, w[1].arrival_us, w[0].id, w[0].arrival_us
            ));
        }
    }
    let mut ids = BTreeSet::new();
    for f in trace {
        if !ids.insert(f.id.as_str()) {
            errs.push(format!("duplicate function id '{}'", f.id));
        }
    }
    for f in trace {
        if let Some(p) = &f.parent {
            if !ids.contains(p.as_str()) {
                errs.push(format!(
                    "function '{}': parent '{}' not present in trace",
                    f.id, p
                ));
            }
        }
    }
    if let Err(SimError::CallGraphCycle { cycle }) = check_call_graph_acyclic(trace) {
        errs.push(format!("call graph cycle: {}", cycle.join(" -> ")));
    }
    errs
}

/// Walk parent links and report the first cycle found, if any.
pub fn check_call_graph_acyclic(trace: &[MicroFunction]) -> Result<()> {
    let parent: BTreeMap<&str, &str> = trace
        .iter()
        .filter_map(|f| f.parent.as_deref().map(|p| (f.id.as_str(), p)))
        .collect();
    let mut state: BTreeMap<&str, u8> = BTreeMap::new(); // 1 = visiting, 2 = done
    for start in parent.keys() {
        if state.get(start).copied() == Some(2) {
            continue;
        }
        let mut path = vec![*start];
        state.insert(start, 1);
        while let Some(&next) = parent.get(path.last().unwrap()) {
            match state.get(next).copied() {
                Some(2) => break,
                Some(1) => {
                    let pos = path.iter().position(|&n| n == next).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        path[pos..].iter().map(|s| s.to_string()).collect();
                    cycle.push(next.to_string());
                    return Err(SimError::CallGraphCycle { cycle });
                }
                _ => {
                    state.insert(next, 1);
                    path.push(next);
                }
            }
        }
        for n in path {
            state.insert(n, 2);
        }
    }
    Ok(())
}
