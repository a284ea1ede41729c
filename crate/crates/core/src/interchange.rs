//! Interchangeable compute and memory: Pareto-frontier extraction over
//! energy/tail-latency points, hybrid CPU+FPGA load splitting, and
//! SLA-constrained data tiering across storage media.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hardware::{ComputeDevice, StorageMedium};
use crate::units::us_to_sec;
use crate::workload::{DataObject, Sla};

/// One energy/latency operating point (a device or medium choice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub label: String,
    pub energy: f64,
    pub tail_latency: f64,
}

/// Offered load over time: `rate_i` requests/second holds on
/// `[t_i, t_{i+1})`; the last sample closes the profile and its rate is
/// ignored. Needs at least two samples to span any time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub samples: Vec<(u64, f64)>,
}

impl LoadProfile {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.samples.len() < 2 {
            errs.push("load profile needs at least two samples".to_string());
        }
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                errs.push("load profile timestamps must be strictly increasing".to_string());
            }
        }
        if self.samples.iter().any(|(_, r)| *r < 0.0 || !r.is_finite()) {
            errs.push("load profile rates must be finite and >= 0".to_string());
        }
        errs
    }

    /// Constant-rate segments (start, end, rate).
    fn segments(&self) -> Vec<(u64, u64, f64)> {
        self.samples
            .windows(2)
            .map(|w| (w[0].0, w[1].0, w[0].1))
            .collect()
    }

    pub fn duration_us(&self) -> u64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(&(a, _)), Some(&(b, _))) => b - a,
            _ => 0,
        }
    }

    /// Time-weighted quantile of the offered rate.
    pub fn rate_quantile(&self, q: f64) -> f64 {
        let mut segs: Vec<(f64, u64)> = self
            .segments()
            .iter()
            .map(|&(s, e, r)| (r, e - s))
            .collect();
        segs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: u64 = segs.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return 0.0;
        }
        let target = q * total as f64;
        let mut acc = 0u64;
        for (rate, w) in segs {
            acc += w;
            if acc as f64 >= target {
                return rate;
            }
        }
        0.0
    }
}

/// The non-dominated subset, sorted by ascending energy (hence strictly
/// descending tail latency). Point p dominates q when p is no worse in both
/// dimensions and better in one; among exactly-equal points the
/// lexicographically smallest label is kept.
pub fn pareto_frontier(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let mut sorted: Vec<&TradeoffPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.energy
            .partial_cmp(&b.energy)
            .unwrap()
            .then(a.tail_latency.partial_cmp(&b.tail_latency).unwrap())
            .then(a.label.cmp(&b.label))
    });
    let mut frontier: Vec<TradeoffPoint> = Vec::new();
    let mut best_tail = f64::INFINITY;
    for p in sorted {
        if p.tail_latency < best_tail {
            frontier.push(p.clone());
            best_tail = p.tail_latency;
        }
    }
    frontier
}

/// CSV export: every input point with an `on_frontier` flag, sorted by
/// (energy, tail, label).
pub fn export_frontier_csv<W: Write>(points: &[TradeoffPoint], out: &mut W) -> Result<()> {
    let frontier = pareto_frontier(points);
    writeln!(out, "label,energy_j,tail_us,on_frontier")?;
    let mut sorted: Vec<&TradeoffPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.energy
            .partial_cmp(&b.energy)
            .unwrap()
            .then(a.tail_latency.partial_cmp(&b.tail_latency).unwrap())
            .then(a.label.cmp(&b.label))
    });
    for p in sorted {
        let on = frontier.iter().any(|f| f == p);
        writeln!(
            out,
            "{},{},{},{}",
            p.label,
            crate::units::fmt_f64(p.energy),
            crate::units::fmt_f64(p.tail_latency),
            on
        )?;
    }
    Ok(())
}

/// Knobs for the hybrid CPU+FPGA split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// Work-units per request.
    pub work_per_request: f64,
    /// Profiled speedup of the workload on the FPGA (CPUs are 1.0).
    pub fpga_speedup: f64,
    /// Quantile of the rate distribution routed to the FPGA as the stable
    /// baseline.
    pub baseline_percentile: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            work_per_request: 1000.0,
            fpga_speedup: 2.0,
            baseline_percentile: 0.10,
        }
    }
}

/// One steady stretch of the hybrid plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSegment {
    pub start_us: u64,
    pub end_us: u64,
    pub fpga_rate: f64,
    pub cpu_rate: f64,
}

/// Simulated energy and SLA outcome of one serving scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub energy_j: f64,
    /// Requests that miss the deadline (scale-up lag on reconfigurable
    /// capacity, or offered load beyond capacity).
    pub violations: u64,
}

/// The hybrid plan plus closed-form outcomes of all three scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridPlan {
    pub baseline_rate: f64,
    pub segments: Vec<PlanSegment>,
    pub hybrid: ScenarioOutcome,
    pub cpu_only: ScenarioOutcome,
    pub fpga_only: ScenarioOutcome,
}

/// Split a load profile between a stable FPGA baseline and a CPU that
/// absorbs bursts.
///
/// The baseline rate is the configured quantile (default p10) of the
/// time-weighted rate distribution, served by the FPGA for the whole
/// profile; excess rate goes to the CPU, which is power-gated during
/// burst-free stretches. If the hybrid plan would cost more than CPU-only
/// serving (tiny loads where FPGA idle power dominates), the split
/// degenerates to baseline 0 with everything on the CPU, so hybrid energy
/// never exceeds CPU-only energy.
pub fn split_hybrid(
    profile: &LoadProfile,
    cpu: &ComputeDevice,
    fpga: &ComputeDevice,
    sla: &Sla,
    config: &HybridConfig,
) -> Result<HybridPlan> {
    let errs = profile.validate();
    if !errs.is_empty() {
        return Err(SimError::Validation(errs.join("; ")));
    }
    let baseline = profile.rate_quantile(config.baseline_percentile);
    let fpga_capacity_rps = fpga.capacity * config.fpga_speedup / config.work_per_request;
    if baseline > fpga_capacity_rps {
        return Err(SimError::Infeasible {
            constraint: "fpga-capacity".to_string(),
            detail: format!(
                "baseline {baseline:.1} req/s exceeds FPGA capacity {fpga_capacity_rps:.1} req/s"
            ),
        });
    }

    let cpu_only = cpu_only_outcome(profile, cpu, sla, config);
    let fpga_only = fpga_only_outcome(profile, fpga, sla, config);
    let (segments, hybrid) = hybrid_outcome(profile, cpu, fpga, sla, config, baseline);

    if hybrid.energy_j > cpu_only.energy_j {
        // Degenerate split: everything on the CPU.
        return Ok(HybridPlan {
            baseline_rate: 0.0,
            segments: profile
                .segments()
                .iter()
                .map(|&(s, e, r)| PlanSegment {
                    start_us: s,
                    end_us: e,
                    fpga_rate: 0.0,
                    cpu_rate: r,
                })
                .collect(),
            hybrid: cpu_only,
            cpu_only,
            fpga_only,
        });
    }

    Ok(HybridPlan {
        baseline_rate: baseline,
        segments,
        hybrid,
        cpu_only,
        fpga_only,
    })
}

fn service_time_us(device_capacity: f64, speedup: f64, work: f64) -> f64 {
    work / (device_capacity * speedup) * 1e6
}

/// Energy of serving `rate` on a device over a segment: idle power plus the
/// linear marginal span at the utilization the load induces.
fn segment_energy(device: &ComputeDevice, speedup: f64, work: f64, rate: f64, len_us: u64) -> f64 {
    let utilization = (rate * work / (device.capacity * speedup)).min(1.0);
    (device.idle_power() + device.active_power_span() * utilization) * us_to_sec(len_us)
}

fn cpu_only_outcome(
    profile: &LoadProfile,
    cpu: &ComputeDevice,
    sla: &Sla,
    config: &HybridConfig,
) -> ScenarioOutcome {
    let mut energy = 0.0;
    let mut violations = 0u64;
    let service = service_time_us(cpu.capacity, 1.0, config.work_per_request);
    let capacity_rps = cpu.capacity / config.work_per_request;
    for (s, e, r) in profile.segments() {
        energy += segment_energy(cpu, 1.0, config.work_per_request, r, e - s);
        if service > sla.deadline_us as f64 {
            violations += (r * us_to_sec(e - s)).round() as u64;
        } else if r > capacity_rps {
            violations += ((r - capacity_rps) * us_to_sec(e - s)).round() as u64;
        }
    }
    ScenarioOutcome {
        energy_j: energy,
        violations,
    }
}

/// FPGA-only serving scales the fabric with the load; every upward rate
/// step needs `startup_latency` to provision, delaying the added portion of
/// the load for the lag. Delayed requests violate when the lag plus service
/// time exceeds the deadline.
fn fpga_only_outcome(
    profile: &LoadProfile,
    fpga: &ComputeDevice,
    sla: &Sla,
    config: &HybridConfig,
) -> ScenarioOutcome {
    // The first upward step below charges the initial provisioning.
    let mut energy = 0.0;
    let mut violations = 0u64;
    let service = service_time_us(fpga.capacity, config.fpga_speedup, config.work_per_request);
    let mut prev_rate = 0.0f64;
    for (s, e, r) in profile.segments() {
        energy += segment_energy(fpga, config.fpga_speedup, config.work_per_request, r, e - s);
        if r > prev_rate {
            energy += fpga.startup_energy;
            let lag = fpga.startup_latency.min(e - s);
            if fpga.startup_latency as f64 + service > sla.deadline_us as f64 {
                violations += ((r - prev_rate) * us_to_sec(lag)).round() as u64;
            }
        }
        prev_rate = r;
    }
    ScenarioOutcome {
        energy_j: energy,
        violations,
    }
}

fn hybrid_outcome(
    profile: &LoadProfile,
    cpu: &ComputeDevice,
    fpga: &ComputeDevice,
    sla: &Sla,
    config: &HybridConfig,
    baseline: f64,
) -> (Vec<PlanSegment>, ScenarioOutcome) {
    let mut energy = 0.0;
    let mut violations = 0u64;
    let mut segments = Vec::new();
    let any_baseline = baseline > 0.0;
    if any_baseline {
        energy += fpga.startup_energy; // configured once, amortized
    }
    // The CPU is gated during burst-free stretches, but only when waking it
    // on demand still meets the deadline.
    let cpu_service = service_time_us(cpu.capacity, 1.0, config.work_per_request);
    let cpu_gateable = cpu.startup_latency as f64 + cpu_service <= sla.deadline_us as f64;
    let cpu_capacity_rps = cpu.capacity / config.work_per_request;
    let mut cpu_was_on = false;
    for (s, e, r) in profile.segments() {
        let fpga_rate = if any_baseline { r.min(baseline) } else { 0.0 };
        let cpu_rate = r - fpga_rate;
        let cpu_on = cpu_rate > 0.0 || !cpu_gateable;
        if any_baseline {
            energy += segment_energy(
                fpga,
                config.fpga_speedup,
                config.work_per_request,
                fpga_rate,
                e - s,
            );
        }
        if cpu_on {
            energy += segment_energy(cpu, 1.0, config.work_per_request, cpu_rate, e - s);
            if !cpu_was_on {
                energy += cpu.startup_energy;
            }
            if cpu_rate > cpu_capacity_rps {
                violations += ((cpu_rate - cpu_capacity_rps) * us_to_sec(e - s)).round() as u64;
            }
        }
        cpu_was_on = cpu_on;
        segments.push(PlanSegment {
            start_us: s,
            end_us: e,
            fpga_rate,
            cpu_rate,
        });
    }
    (
        segments,
        ScenarioOutcome {
            energy_j: energy,
            violations,
        },
    )
}

/// Per-object access statistics for tiering decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessStats {
    pub reads_per_sec: f64,
    pub writes_per_sec: f64,
    pub bytes_per_access: u64,
}

/// Assign each object to a medium minimizing steady-state power (idle
/// byte-cost plus access bandwidth cost), subject to: per-object access
/// tail latency within the SLA deadline for accessed objects, media
/// capacity, and an optional energy budget per second of steady state.
/// Exact by enumeration up to 10 objects, greedy beyond.
pub fn tier_data(
    objects: &[DataObject],
    access_stats: &BTreeMap<String, AccessStats>,
    media: &[StorageMedium],
    sla: &Sla,
    energy_budget: Option<f64>,
) -> Result<BTreeMap<String, String>> {
    if media.is_empty() {
        return Err(SimError::Domain("no media supplied".to_string()));
    }
    let total_size: u64 = objects.iter().map(|o| o.size).sum();
    let total_capacity: u64 = media.iter().map(|m| m.capacity).sum();
    if total_size > total_capacity {
        return Err(SimError::Infeasible {
            constraint: "capacity".to_string(),
            detail: format!("objects need {total_size} B, media hold {total_capacity} B"),
        });
    }

    let mut media_sorted: Vec<&StorageMedium> = media.iter().collect();
    media_sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut objects_sorted: Vec<&DataObject> = objects.iter().collect();
    objects_sorted.sort_by(|a, b| a.id.cmp(&b.id));

    // Steady-state power of object o on medium m, watts.
    let cost = |o: &DataObject, m: &StorageMedium| -> f64 {
        let stats = access_stats.get(&o.id).copied().unwrap_or(AccessStats {
            reads_per_sec: 0.0,
            writes_per_sec: 0.0,
            bytes_per_access: 0,
        });
        let bw = (stats.reads_per_sec + stats.writes_per_sec) * stats.bytes_per_access as f64;
        o.size as f64 * m.idle_power_per_byte + bw * m.active_power_per_bw
    };
    let latency_ok = |o: &DataObject, m: &StorageMedium| -> bool {
        let accessed = access_stats
            .get(&o.id)
            .map(|s| s.reads_per_sec + s.writes_per_sec > 0.0)
            .unwrap_or(false);
        !accessed || m.access_latency_tail + m.remote_access_penalty <= sla.deadline_us
    };

    // Per object: latency-feasible media, cheapest first.
    let mut feasible: Vec<Vec<usize>> = Vec::with_capacity(objects_sorted.len());
    for o in &objects_sorted {
        let mut opts: Vec<usize> = (0..media_sorted.len())
            .filter(|&mi| latency_ok(o, media_sorted[mi]) && media_sorted[mi].capacity >= o.size)
            .collect();
        if opts.is_empty() {
            return Err(SimError::Infeasible {
                constraint: "latency".to_string(),
                detail: format!(
                    "object '{}' has no medium within the {} µs deadline",
                    o.id, sla.deadline_us
                ),
            });
        }
        opts.sort_by(|&a, &b| {
            cost(o, media_sorted[a])
                .partial_cmp(&cost(o, media_sorted[b]))
                .unwrap()
                .then(media_sorted[a].id.cmp(&media_sorted[b].id))
        });
        feasible.push(opts);
    }

    let combos: u64 = feasible
        .iter()
        .map(|f| f.len() as u64)
        .try_fold(1u64, |a, b| a.checked_mul(b))
        .unwrap_or(u64::MAX);
    let assignment = if objects_sorted.len() <= 10 && combos <= 2_000_000 {
        tier_exact(&objects_sorted, &media_sorted, &feasible, &cost)
    } else {
        tier_greedy(&objects_sorted, &media_sorted, &feasible, &cost)
    };

    let assignment = assignment.ok_or_else(|| SimError::Infeasible {
        constraint: "capacity".to_string(),
        detail: "no capacity-feasible assignment of objects to media".to_string(),
    })?;

    if let Some(budget) = energy_budget {
        let total: f64 = objects_sorted
            .iter()
            .zip(&assignment)
            .map(|(o, &mi)| cost(o, media_sorted[mi]))
            .sum();
        if total > budget {
            return Err(SimError::Infeasible {
                constraint: "budget".to_string(),
                detail: format!(
                    "cheapest feasible assignment needs {total:.6} J/s, budget is {budget:.6}"
                ),
            });
        }
    }

    Ok(objects_sorted
        .iter()
        .zip(&assignment)
        .map(|(o, &mi)| (o.id.clone(), media_sorted[mi].id.clone()))
        .collect())
}

/// Exhaustive minimum-power assignment honoring capacities. Ties break by
/// walking objects in id order and preferring the pre-sorted (cheaper, then
/// smaller-id) medium.
fn tier_exact(
    objects: &[&DataObject],
    media: &[&StorageMedium],
    feasible: &[Vec<usize>],
    cost: &dyn Fn(&DataObject, &StorageMedium) -> f64,
) -> Option<Vec<usize>> {
    struct Ctx<'a> {
        objects: &'a [&'a DataObject],
        media: &'a [&'a StorageMedium],
        feasible: &'a [Vec<usize>],
        cost: &'a dyn Fn(&DataObject, &StorageMedium) -> f64,
    }
    fn recurse(
        ctx: &Ctx<'_>,
        depth: usize,
        acc: f64,
        current: &mut Vec<usize>,
        used: &mut Vec<u64>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if depth == ctx.objects.len() {
            let better = match best {
                None => true,
                Some((c, v)) => acc < *c || (acc == *c && *current < *v),
            };
            if better {
                *best = Some((acc, current.clone()));
            }
            return;
        }
        let o = ctx.objects[depth];
        for &mi in &ctx.feasible[depth] {
            if used[mi] + o.size > ctx.media[mi].capacity {
                continue;
            }
            used[mi] += o.size;
            current.push(mi);
            recurse(ctx, depth + 1, acc + (ctx.cost)(o, ctx.media[mi]), current, used, best);
            current.pop();
            used[mi] -= o.size;
        }
    }
    let ctx = Ctx {
        objects,
        media,
        feasible,
        cost,
    };
    let mut best = None;
    recurse(
        &ctx,
        0,
        0.0,
        &mut Vec::with_capacity(objects.len()),
        &mut vec![0u64; media.len()],
        &mut best,
    );
    best.map(|(_, v)| v)
}

/// Greedy fallback: commit objects by ascending best-choice power with
/// capacity updates, deterministic tie-break by object then medium id.
fn tier_greedy(
    objects: &[&DataObject],
    media: &[&StorageMedium],
    feasible: &[Vec<usize>],
    cost: &dyn Fn(&DataObject, &StorageMedium) -> f64,
) -> Option<Vec<usize>> {
    let mut used = vec![0u64; media.len()];
    let mut out = vec![usize::MAX; objects.len()];
    let mut remaining: Vec<usize> = (0..objects.len()).collect();
    while !remaining.is_empty() {
        let mut pick: Option<(f64, usize, usize)> = None;
        for &oi in &remaining {
            let o = objects[oi];
            for &mi in &feasible[oi] {
                if used[mi] + o.size > media[mi].capacity {
                    continue;
                }
                let c = cost(o, media[mi]);
                if pick.map(|(pc, poi, _)| (c, oi) < (pc, poi)).unwrap_or(true) {
                    pick = Some((c, oi, mi));
                }
                break; // feasible[] is cheapest-first
            }
        }
        let (_, oi, mi) = pick?;
        used[mi] += objects[oi].size;
        out[oi] = mi;
        remaining.retain(|&x| x != oi);
    }
    Some(out)
}
