//! Test support: seeded random placement instances and an independent
//! exhaustive-enumeration oracle for solver verification.
//!
//! Compiled only with the `testkit` feature; the oracle recomputes edge
//! energies from raw device/medium fields (not through `edge_cost`) and
//! enumerates every choice with an odometer, so it shares only the
//! documented model primitives with the solvers it checks.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::hardware::{ComputeDevice, DeviceKind, StorageMedium, StorageTier};
use crate::placement::{
    pack_device_schedule, CostParams, DeviceSlot, MediumSlot, PackEntry, PlacementProblem,
    VIOLATION_PENALTY_J,
};
use crate::workload::{Access, MicroFunction, Sla};

/// Cap on the oracle's leaf count Π(options_f + 1): instances are generated
/// so exhaustive enumeration stays tractable; functions stop being added
/// once the cap would be exceeded.
pub fn random_instance<R: Rng>(rng: &mut R, max_functions: usize, leaf_cap: u64) -> PlacementProblem {
    let kinds = [
        DeviceKind::CPU,
        DeviceKind::CPU,
        DeviceKind::GPU,
        DeviceKind::FPGA,
        DeviceKind::OTHER,
    ];
    let devices: Vec<DeviceSlot> = (0..5)
        .map(|i| {
            let mut slot = DeviceSlot::new(ComputeDevice {
                id: format!("r{i}"),
                kind: kinds[i],
                peak_power: rng.random_range(20.0..400.0),
                idle_fraction: rng.random_range(0.2..0.8),
                capacity: rng.random_range(1e5..1e7),
                startup_latency: if kinds[i] == DeviceKind::FPGA {
                    rng.random_range(0..5_000)
                } else {
                    0
                },
                startup_energy: if kinds[i] == DeviceKind::FPGA {
                    rng.random_range(0.0..0.1)
                } else {
                    0.0
                },
                embodied_rate: 0.0,
            });
            // Some devices carry work over from the previous window.
            if rng.random::<f64>() < 0.3 {
                slot.available_from = rng.random_range(0..20_000);
            }
            if kinds[i] == DeviceKind::FPGA && rng.random::<f64>() < 0.5 {
                slot.configured_app = Some(format!("A{}", rng.random_range(1..4)));
            }
            slot
        })
        .collect();

    let media: Vec<MediumSlot> = (0..2)
        .map(|i| {
            let tier = if i == 0 { StorageTier::DRAM } else { StorageTier::SSD };
            MediumSlot {
                medium: StorageMedium {
                    id: format!("m{i}"),
                    tier,
                    capacity: 1 << 40,
                    active_power_per_bw: rng.random_range(1e-11..1e-8),
                    idle_power_per_byte: 1e-10,
                    access_latency_p50: rng.random_range(0..5),
                    access_latency_tail: rng.random_range(5..50),
                    bandwidth: rng.random_range(1e8..1e10),
                    remote_access_penalty: if i == 0 { 0 } else { rng.random_range(0..20) },
                },
                // Budgets generous enough to never bind at this scale; a
                // dedicated tight-budget suite covers the binding case.
                bytes_budget: 1 << 40,
            }
        })
        .collect();

    // Three apps own up to three objects each, available on 1-2 media.
    let mut object_locations = BTreeMap::new();
    let mut app_objects: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
    for a in 1..=3 {
        let mut objs = Vec::new();
        for o in 1..=rng.random_range(1..4usize) {
            let id = format!("A{a}{o}");
            let bytes = rng.random_range(1_000..5_000_000u64);
            let mut locs = BTreeSet::new();
            locs.insert(format!("m{}", rng.random_range(0..2)));
            if rng.random::<f64>() < 0.5 {
                locs.insert("m0".to_string());
                locs.insert("m1".to_string());
            }
            object_locations.insert(id.clone(), locs);
            objs.push((id, bytes));
        }
        app_objects.insert(format!("A{a}"), objs);
    }

    let n = rng.random_range(1..=max_functions);
    let mut functions: Vec<MicroFunction> = Vec::new();
    let mut leaves: u64 = 1;
    for i in 0..n {
        let app = format!("A{}", rng.random_range(1..4));
        let mut speedup = BTreeMap::from([(DeviceKind::CPU, 1.0)]);
        for kind in [DeviceKind::GPU, DeviceKind::FPGA, DeviceKind::OTHER] {
            if rng.random::<f64>() < 0.7 {
                speedup.insert(kind, rng.random_range(0.5..8.0));
            }
        }
        let objs = &app_objects[&app];
        let mut reads = Vec::new();
        let mut writes = Vec::new();
        for (oid, bytes) in objs.iter().take(2) {
            if rng.random::<f64>() < 0.5 {
                reads.push(Access {
                    object_id: oid.clone(),
                    bytes: rng.random_range(1..=*bytes),
                });
            }
            if rng.random::<f64>() < 0.15 {
                writes.push(Access {
                    object_id: oid.clone(),
                    bytes: rng.random_range(1..=*bytes),
                });
            }
        }
        let f = MicroFunction {
            id: format!("f{i}"),
            app_id: app,
            arrival_us: 0,
            work: rng.random_range(10.0..5e5),
            speedup,
            reads,
            writes,
            sla: Sla::hard(rng.random_range(500..2_000_000)),
            energy_budget_j: None,
            parent: None,
        };
        // Options: devices with a speedup × media combinations, + fallback.
        let mut combos: u64 = 1;
        let unique_objects: BTreeSet<&str> = f
            .reads
            .iter()
            .chain(f.writes.iter())
            .map(|a| a.object_id.as_str())
            .collect();
        for oid in unique_objects {
            combos = combos.saturating_mul(object_locations[oid].len() as u64);
        }
        let device_count: u64 = kinds
            .iter()
            .filter(|k| f.speedup.contains_key(k))
            .count() as u64;
        let opts = device_count * combos + 1;
        if leaves.saturating_mul(opts) > leaf_cap {
            break;
        }
        leaves *= opts;
        functions.push(f);
    }
    if functions.is_empty() {
        // Degenerate cap: keep at least one compute-only function.
        functions.push(MicroFunction {
            id: "f0".into(),
            app_id: "A1".into(),
            arrival_us: 0,
            work: rng.random_range(10.0..5e5),
            speedup: BTreeMap::from([(DeviceKind::CPU, 1.0)]),
            reads: Vec::new(),
            writes: Vec::new(),
            sla: Sla::hard(rng.random_range(500..2_000_000)),
            energy_budget_j: None,
            parent: None,
        });
    }

    PlacementProblem {
        functions,
        devices,
        media,
        object_locations,
        now: 0,
        window_end: 1_000,
        params: CostParams::default(),
    }
}

// ---------------------------------------------------------------------------
// The oracle: independent exhaustive search.
// ---------------------------------------------------------------------------

#[derive(Clone)]
pub struct OracleOption {
    device_idx: usize,
    media_idx: Vec<usize>,
    duration: u64,
    compute_energy: f64,
    data_energy: f64,
}

/// All options of one function, plus the index of its cheapest option
/// (best-effort target). Energies recomputed from raw fields.
pub struct OracleFn {
    fidx: usize,
    objects: Vec<(String, u64)>,
    options: Vec<OracleOption>,
}

pub fn oracle_options(problem: &PlacementProblem) -> Vec<OracleFn> {
    let mut order: Vec<usize> = (0..problem.functions.len()).collect();
    order.sort_by(|&a, &b| problem.functions[a].id.cmp(&problem.functions[b].id));

    order
        .into_iter()
        .map(|fidx| {
            let f = &problem.functions[fidx];
            // Bytes per object, reads and writes merged, sorted by object id.
            let mut per_object: BTreeMap<String, u64> = BTreeMap::new();
            for a in f.reads.iter().chain(f.writes.iter()) {
                *per_object.entry(a.object_id.clone()).or_insert(0) += a.bytes;
            }
            let objects: Vec<(String, u64)> = per_object.into_iter().collect();

            let mut options = Vec::new();
            for (device_idx, slot) in problem.devices.iter().enumerate() {
                let Some(speedup) = f.speedup.get(&slot.device.kind) else {
                    continue;
                };
                // Per-object medium indices, sorted by medium id.
                let sets: Vec<Vec<usize>> = objects
                    .iter()
                    .map(|(oid, _)| {
                        let locs = &problem.object_locations[oid];
                        let mut v: Vec<usize> = problem
                            .media
                            .iter()
                            .enumerate()
                            .filter(|(_, m)| locs.contains(&m.medium.id))
                            .map(|(i, _)| i)
                            .collect();
                        v.sort_by(|&a, &b| {
                            problem.media[a].medium.id.cmp(&problem.media[b].medium.id)
                        });
                        v
                    })
                    .collect();
                for combo in odometer(&sets) {
                    // Duration: compute + per-access transfer/latency.
                    let compute_us =
                        (f.work / (slot.device.capacity * speedup) * 1e6).ceil() as u64;
                    let mut duration = compute_us;
                    let mut data_energy = 0.0;
                    for ((_, bytes), &mi) in objects.iter().zip(&combo) {
                        let m = &problem.media[mi].medium;
                        duration += (*bytes as f64 / m.bandwidth * 1e6).ceil() as u64
                            + m.access_latency_tail
                            + m.remote_access_penalty;
                        data_energy += m.active_power_per_bw * *bytes as f64;
                        if m.remote_access_penalty > 0 {
                            data_energy += problem.params.network_j_per_byte * *bytes as f64;
                        }
                    }
                    let compute_energy = (1.0 - slot.device.idle_fraction)
                        * slot.device.peak_power
                        * duration as f64
                        / 1e6;
                    options.push(OracleOption {
                        device_idx,
                        media_idx: combo,
                        duration,
                        compute_energy,
                        data_energy,
                    });
                }
            }
            // Cheapest-first by (cost, device id, media) fixes option 0 as
            // the best-effort target, mirroring the documented fallback.
            options.sort_by(|a, b| {
                (a.compute_energy + a.data_energy)
                    .partial_cmp(&(b.compute_energy + b.data_energy))
                    .unwrap()
                    .then_with(|| {
                        problem.devices[a.device_idx]
                            .device
                            .id
                            .cmp(&problem.devices[b.device_idx].device.id)
                    })
                    .then_with(|| a.media_idx.cmp(&b.media_idx))
            });
            OracleFn {
                fidx,
                objects,
                options,
            }
        })
        .collect()
}

fn odometer(sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for set in sets {
        let mut next = Vec::new();
        for prefix in &out {
            for &v in set {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Evaluate one complete choice (option index per function, or usize::MAX
/// for best-effort). Returns None when a hard constraint is broken.
fn oracle_evaluate(
    problem: &PlacementProblem,
    fns: &[OracleFn],
    choice: &[usize],
) -> Option<(usize, f64)> {
    // Media budgets (best-effort exempt).
    let mut media_used = vec![0u64; problem.media.len()];
    for (i, &c) in choice.iter().enumerate() {
        if c == usize::MAX {
            continue;
        }
        let opt = &fns[i].options[c];
        for ((_, bytes), &mi) in fns[i].objects.iter().zip(&opt.media_idx) {
            media_used[mi] += bytes;
        }
    }
    for (mi, used) in media_used.iter().enumerate() {
        if *used > problem.media[mi].bytes_budget {
            return None;
        }
    }

    // Pack each device.
    let mut per_device: Vec<Vec<(usize, PackEntry)>> = vec![Vec::new(); problem.devices.len()];
    for (i, &c) in choice.iter().enumerate() {
        let best_effort = c == usize::MAX;
        let opt = if best_effort {
            &fns[i].options[0]
        } else {
            &fns[i].options[c]
        };
        let f = &problem.functions[fns[i].fidx];
        per_device[opt.device_idx].push((
            i,
            PackEntry {
                key: i,
                app_id: f.app_id.clone(),
                duration: opt.duration,
                deadline_abs: f.deadline_abs(),
                best_effort,
            },
        ));
    }

    let mut violations = 0usize;
    let mut reconfig_energy: BTreeMap<usize, f64> = BTreeMap::new();
    let mut feasible_ok = true;
    for (didx, entries) in per_device.iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let slot = &problem.devices[didx];
        let pe: Vec<PackEntry> = entries.iter().map(|(_, e)| e.clone()).collect();
        let packing = pack_device_schedule(slot, problem.now, &pe);
        for (pos, (_, e)) in entries.iter().enumerate() {
            let (_, end) = packing.spans[pos];
            if e.best_effort {
                violations += 1;
            } else if end > e.deadline_abs {
                feasible_ok = false;
            }
        }
        for &pos in &packing.reconfig_charged {
            let (i, _) = entries[pos];
            *reconfig_energy.entry(i).or_insert(0.0) += slot.device.startup_energy;
        }
    }
    if !feasible_ok {
        return None;
    }

    // Total cost in function-id order, mirroring the documented summation:
    // per function ((compute + reconfig) + data), then fold.
    let mut total = 0.0;
    for (i, &c) in choice.iter().enumerate() {
        let opt = if c == usize::MAX {
            &fns[i].options[0]
        } else {
            &fns[i].options[c]
        };
        let reconfig = reconfig_energy.get(&i).copied().unwrap_or(0.0);
        total += (opt.compute_energy + reconfig) + opt.data_energy;
    }
    Some((violations, total))
}

/// Exhaustive minimum over all choices: every option per function plus the
/// best-effort fallback; unplaceable functions count one violation.
pub fn oracle_solve(problem: &PlacementProblem) -> (usize, f64) {
    let fns = oracle_options(problem);
    let n = fns.len();
    let mut best: Option<(usize, f64)> = None;

    // Odometer over per-function option index (options.len() = best-effort).
    let mut idx = vec![0usize; n];
    loop {
        let mut choice = Vec::with_capacity(n);
        let mut base_violations = 0usize;
        for (i, f) in fns.iter().enumerate() {
            if f.options.is_empty() {
                base_violations += 1;
                choice.push(usize::MAX); // ignored: unplaceable
            } else if idx[i] == f.options.len() {
                choice.push(usize::MAX);
            } else {
                choice.push(idx[i]);
            }
        }
        // Unplaceable functions have no real options: mark them separately.
        let eval_choice: Vec<usize> = choice
            .iter()
            .enumerate()
            .map(|(i, &c)| if fns[i].options.is_empty() { usize::MAX - 1 } else { c })
            .collect();
        if let Some((mut v, total)) = oracle_evaluate_skipping(problem, &fns, &eval_choice) {
            v += base_violations;
            let better = match best {
                None => true,
                Some((bv, bc)) => (v, total) < (bv, bc),
            };
            if better {
                best = Some((v, total));
            }
        }

        // Advance the odometer.
        let mut pos = 0;
        loop {
            if pos == n {
                return best.expect("at least one complete choice exists");
            }
            let width = fns[pos].options.len(); // best-effort = extra value
            if fns[pos].options.is_empty() {
                pos += 1;
                continue;
            }
            idx[pos] += 1;
            if idx[pos] <= width {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Like `oracle_evaluate` but treats `usize::MAX - 1` as "unplaceable":
/// no placement, no cost, violation counted by the caller.
fn oracle_evaluate_skipping(
    problem: &PlacementProblem,
    fns: &[OracleFn],
    choice: &[usize],
) -> Option<(usize, f64)> {
    let placed: Vec<usize> = (0..choice.len())
        .filter(|&i| choice[i] != usize::MAX - 1)
        .collect();
    let sub_choice: Vec<usize> = placed.iter().map(|&i| choice[i]).collect();
    let sub_fns: Vec<OracleFn> = placed
        .iter()
        .map(|&i| OracleFn {
            fidx: fns[i].fidx,
            objects: fns[i].objects.clone(),
            options: fns[i].options.clone(),
        })
        .collect();
    oracle_evaluate(problem, &sub_fns, &sub_choice)
}

// ---------------------------------------------------------------------------
// Round-robin baseline: cycle devices in id order, ignore costs.
// ---------------------------------------------------------------------------

pub fn round_robin_objective(problem: &PlacementProblem) -> f64 {
    let fns = oracle_options(problem);
    let mut cursor = 0usize;
    let d = problem.devices.len();
    let mut choice = Vec::with_capacity(fns.len());
    let mut device_order: Vec<usize> = (0..d).collect();
    device_order.sort_by(|&a, &b| {
        problem.devices[a]
            .device
            .id
            .cmp(&problem.devices[b].device.id)
    });
    for f in &fns {
        if f.options.is_empty() {
            choice.push(usize::MAX - 1);
            continue;
        }
        // Next device in the cycle that has any option for this function;
        // take its cheapest media combination.
        let mut picked = None;
        for step in 0..d {
            let didx = device_order[(cursor + step) % d];
            if let Some(oi) = f.options.iter().position(|o| o.device_idx == didx) {
                picked = Some(oi);
                cursor = (cursor + step + 1) % d;
                break;
            }
        }
        choice.push(picked.unwrap_or(usize::MAX));
    }
    // Round-robin ignores deadlines; evaluate leniently by counting misses.
    let placed: Vec<usize> = (0..choice.len())
        .filter(|&i| choice[i] != usize::MAX - 1)
        .collect();
    let unplaceable = choice.len() - placed.len();

    let mut per_device: Vec<Vec<PackEntry>> = vec![Vec::new(); problem.devices.len()];
    let mut opts = Vec::new();
    for &i in &placed {
        let opt = &fns[i].options[choice[i]];
        let f = &problem.functions[fns[i].fidx];
        per_device[opt.device_idx].push(PackEntry {
            key: i,
            app_id: f.app_id.clone(),
            duration: opt.duration,
            deadline_abs: f.deadline_abs(),
            best_effort: false,
        });
        opts.push((i, opt));
    }
    let mut violations = unplaceable;
    let mut total = 0.0;
    for (didx, entries) in per_device.iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let slot = &problem.devices[didx];
        let packing = pack_device_schedule(slot, problem.now, entries);
        for (pos, e) in entries.iter().enumerate() {
            if packing.spans[pos].1 > e.deadline_abs {
                violations += 1;
            }
        }
        total += packing.reconfig_events as f64 * slot.device.startup_energy;
    }
    for (_, opt) in &opts {
        total += opt.compute_energy + opt.data_energy;
    }
    total + violations as f64 * VIOLATION_PENALTY_J
}

