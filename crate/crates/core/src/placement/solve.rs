//! Placement solvers: exact branch-and-bound, memoized greedy heuristic,
//! and the fractional lower bound.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{Result, SimError};
use crate::hardware::DeviceKind;

use super::{
    edge_cost_parts, object_bytes, pack_device_schedule, Assignment, EdgeCost, MediaChoice,
    PackEntry, Placement, PlacementProblem, SlaMode,
};

/// Above this many functions `solve_exact` refuses the instance.
pub const DEFAULT_EXACT_CUTOFF: usize = 12;

/// Below this many functions the exact solver skips cost bounding and just
/// enumerates.
const PLAIN_ENUMERATION_BELOW: usize = 6;

/// Guard against pathological media-combination blowup in the exact solver.
const MAX_TOTAL_CANDIDATES: usize = 200_000;

/// Counters describing one solver invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    /// Search nodes expanded (exact) or candidate evaluations (heuristic).
    pub nodes_expanded: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// Wall time of the call. Reported on stderr logs only; deterministic
    /// result files never include it.
    pub wall_time_us: u64,
}

impl SolverStats {
    pub fn absorb(&mut self, other: &SolverStats) {
        self.nodes_expanded += other.nodes_expanded;
        self.cache_hits += other.cache_hits;
        self.cache_misses += other.cache_misses;
        self.wall_time_us += other.wall_time_us;
    }
}

/// Memoization cache reused across scheduling windows by the heuristic.
///
/// Keyed by (app id, device kind, quantized residual state); the value is
/// the device/media choice that won last time. A cached choice is always
/// re-validated against current feasibility before use, so staleness can
/// cost quality but never correctness.
#[derive(Debug, Default)]
pub struct MemoCache {
    map: BTreeMap<(String, DeviceKind, Vec<u8>), CachedChoice>,
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct CachedChoice {
    device_id: String,
    media: Vec<String>,
}

impl MemoCache {
    pub fn new() -> Self {
        MemoCache::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One candidate edge: a device plus a medium per accessed object.
#[derive(Debug, Clone)]
struct Candidate {
    device_idx: usize,
    /// Medium index per object, aligned with `FnOptions::objects`.
    media_idx: Vec<usize>,
    duration: u64,
    /// Edge energy without any reconfiguration charge.
    base_cost: f64,
    compute_energy: f64,
    data_energy: f64,
}

/// All candidates of one function, sorted cheapest first.
#[derive(Debug, Clone)]
struct FnOptions {
    /// Index into the id-sorted function list.
    fidx: usize,
    objects: Vec<(String, u64)>,
    candidates: Vec<Candidate>,
    /// Cheapest candidate by (cost, device id, media ids); used for
    /// best-effort placement of functions that cannot be placed feasibly.
    min_base_cost: f64,
}

struct Instance<'a> {
    problem: &'a PlacementProblem,
    options: Vec<FnOptions>,
    /// Suffix sums of per-function minimum base cost, for bounding.
    suffix_min: Vec<f64>,
}

fn build_instance(problem: &PlacementProblem) -> Result<Instance<'_>> {
    let mut order: Vec<usize> = (0..problem.functions.len()).collect();
    order.sort_by(|&a, &b| problem.functions[a].id.cmp(&problem.functions[b].id));

    let mut options = Vec::with_capacity(order.len());
    let mut total_candidates = 0usize;
    for &fidx in &order {
        let f = &problem.functions[fidx];
        let objects: Vec<(String, u64)> = object_bytes(f)
            .into_iter()
            .map(|(o, b)| (o.to_string(), b))
            .collect();

        // Media location choices per object.
        let mut location_sets: Vec<Vec<usize>> = Vec::with_capacity(objects.len());
        for (object_id, _) in &objects {
            let locs = problem
                .object_locations
                .get(object_id)
                .ok_or_else(|| {
                    SimError::Validation(format!(
                        "object '{object_id}' accessed by '{}' has no locations",
                        f.id
                    ))
                })?;
            let mut idxs: Vec<usize> = problem
                .media
                .iter()
                .enumerate()
                .filter(|(_, m)| locs.contains(&m.medium.id))
                .map(|(i, _)| i)
                .collect();
            idxs.sort_by(|&a, &b| problem.media[a].medium.id.cmp(&problem.media[b].medium.id));
            if idxs.is_empty() {
                return Err(SimError::Validation(format!(
                    "object '{object_id}' accessed by '{}' is on no known medium",
                    f.id
                )));
            }
            location_sets.push(idxs);
        }

        let mut candidates = Vec::new();
        for (device_idx, slot) in problem.devices.iter().enumerate() {
            if !f.speedup.contains_key(&slot.device.kind) {
                continue;
            }
            for combo in combos(&location_sets) {
                let media: MediaChoice = objects
                    .iter()
                    .zip(&combo)
                    .map(|((o, _), &mi)| (o.as_str(), &problem.media[mi].medium))
                    .collect();
                let (compute, data, duration) =
                    edge_cost_parts(f, &slot.device, &media, &problem.params)?;
                candidates.push(Candidate {
                    device_idx,
                    media_idx: combo,
                    duration,
                    base_cost: compute + data,
                    compute_energy: compute,
                    data_energy: data,
                });
            }
        }
        candidates.sort_by(|a, b| {
            a.base_cost
                .partial_cmp(&b.base_cost)
                .unwrap()
                .then_with(|| {
                    problem.devices[a.device_idx]
                        .device
                        .id
                        .cmp(&problem.devices[b.device_idx].device.id)
                })
                .then_with(|| a.media_idx.cmp(&b.media_idx))
        });
        total_candidates += candidates.len();
        if total_candidates > MAX_TOTAL_CANDIDATES {
            return Err(SimError::Domain(format!(
                "instance has more than {MAX_TOTAL_CANDIDATES} candidate edges; \
                 use the heuristic solver"
            )));
        }
        let min_base_cost = candidates.first().map(|c| c.base_cost).unwrap_or(0.0);
        options.push(FnOptions {
            fidx,
            objects,
            candidates,
            min_base_cost,
        });
    }

    let mut suffix_min = vec![0.0; options.len() + 1];
    for i in (0..options.len()).rev() {
        suffix_min[i] = suffix_min[i + 1] + options[i].min_base_cost;
    }
    Ok(Instance {
        problem,
        options,
        suffix_min,
    })
}

fn combos(location_sets: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for set in location_sets {
        let mut next = Vec::with_capacity(out.len() * set.len());
        for prefix in &out {
            for &m in set {
                let mut v = prefix.clone();
                v.push(m);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// A choice per function (in instance order): candidate index, or None for
/// best-effort placement on the cheapest edge, or unplaceable if the
/// function has no candidates at all.
type ChoiceVec = Vec<Choice>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Candidate(usize),
    /// Hard mode only: cheapest edge, packed after all deadline-constrained
    /// work, flagged as a violation. Exempt from media budgets.
    BestEffort,
    /// No edge exists at all (no device kind matches the speedup profile).
    Unplaceable,
}

/// Evaluate a complete choice vector into an [`Assignment`].
///
/// Builds the per-device packings (reconfiguration latencies and energies
/// included), sums edge costs in function-id order, and prices lateness in
/// soft mode.
fn evaluate(inst: &Instance<'_>, choices: &ChoiceVec) -> Assignment {
    let problem = inst.problem;
    // Collect pack entries per device.
    let mut per_device: Vec<Vec<(usize, PackEntry)>> = vec![Vec::new(); problem.devices.len()];
    for (i, choice) in choices.iter().enumerate() {
        let opt = &inst.options[i];
        let f = &problem.functions[opt.fidx];
        let (cand, best_effort) = match choice {
            Choice::Candidate(c) => (&opt.candidates[*c], false),
            Choice::BestEffort => (&opt.candidates[0], true),
            Choice::Unplaceable => continue,
        };
        per_device[cand.device_idx].push((
            i,
            PackEntry {
                key: i,
                app_id: f.app_id.clone(),
                duration: cand.duration,
                deadline_abs: f.deadline_abs(),
                best_effort,
            },
        ));
    }

    let mut spans: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    let mut reconfig_energy: BTreeMap<usize, f64> = BTreeMap::new();
    for (didx, entries) in per_device.iter().enumerate() {
        if entries.is_empty() {
            continue;
        }
        let slot = &problem.devices[didx];
        let pack_entries: Vec<PackEntry> = entries.iter().map(|(_, e)| e.clone()).collect();
        let packing = pack_device_schedule(slot, problem.now, &pack_entries);
        for (pos, (i, _)) in entries.iter().enumerate() {
            spans.insert(*i, packing.spans[pos]);
        }
        for &pos in &packing.reconfig_charged {
            let (i, _) = entries[pos];
            *reconfig_energy.entry(i).or_insert(0.0) += slot.device.startup_energy;
        }
    }

    let mut placements = BTreeMap::new();
    let mut total_cost = 0.0;
    let mut violations = 0usize;
    for (i, choice) in choices.iter().enumerate() {
        let opt = &inst.options[i];
        let f = &problem.functions[opt.fidx];
        let (cand, best_effort) = match choice {
            Choice::Candidate(c) => (&opt.candidates[*c], false),
            Choice::BestEffort => (&opt.candidates[0], true),
            Choice::Unplaceable => {
                violations += 1;
                continue;
            }
        };
        let (start, end) = spans[&i];
        let reconfig = reconfig_energy.get(&i).copied().unwrap_or(0.0);
        let cost = EdgeCost::new(cand.compute_energy + reconfig, cand.data_energy);
        // Best-effort placements are flagged regardless of where packing put
        // them: the solver declined the deadline guarantee (and they bypass
        // media budgets).
        let feasible = !best_effort && end <= f.deadline_abs();
        if !feasible {
            violations += 1;
        }
        total_cost += cost.total;
        if let SlaMode::Soft { penalty_j_per_us } = problem.params.sla_mode {
            if !feasible {
                total_cost += penalty_j_per_us * (end - f.deadline_abs()) as f64;
            }
        }
        let media_choice: BTreeMap<String, String> = opt
            .objects
            .iter()
            .zip(&cand.media_idx)
            .map(|((o, _), &mi)| (o.clone(), problem.media[mi].medium.id.clone()))
            .collect();
        placements.insert(
            f.id.clone(),
            Placement {
                device_id: problem.devices[cand.device_idx].device.id.clone(),
                start_us: start,
                end_us: end,
                media_choice,
                cost,
                feasible,
            },
        );
    }
    Assignment {
        placements,
        total_cost,
        violations,
    }
}

/// Canonical order over complete choices, used to break exact objective
/// ties: lexicographic by (device id, media ids) walking functions in id
/// order.
fn canonical_key(inst: &Instance<'_>, choices: &ChoiceVec) -> Vec<(String, Vec<usize>)> {
    choices
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            Choice::Candidate(ci) => {
                let cand = &inst.options[i].candidates[*ci];
                (
                    inst.problem.devices[cand.device_idx].device.id.clone(),
                    cand.media_idx.clone(),
                )
            }
            Choice::BestEffort => {
                let cand = &inst.options[i].candidates[0];
                (
                    format!("~{}", inst.problem.devices[cand.device_idx].device.id),
                    cand.media_idx.clone(),
                )
            }
            Choice::Unplaceable => ("~~".to_string(), Vec::new()),
        })
        .collect()
}

struct SearchState {
    /// Per device: pack entries committed so far.
    device_entries: Vec<Vec<PackEntry>>,
    media_used: Vec<u64>,
    base_cost: f64,
    violations: usize,
}

struct Best {
    violations: usize,
    objective: f64,
    key: Vec<(String, Vec<usize>)>,
    choices: ChoiceVec,
}

/// Minimum-cost feasible assignment by branch-and-bound (plain enumeration
/// on small instances). Deterministic: exact objective ties break
/// lexicographically by function id, then device id, then media ids.
///
/// In hard SLA mode the objective is lexicographic (violations, energy): a
/// function is flagged only when no deadline-feasible placement exists given
/// the rest of the assignment, and flagged functions run best-effort on
/// their cheapest edge. Instances larger than `cutoff` are refused.
pub fn solve_exact(problem: &PlacementProblem) -> Result<Assignment> {
    let mut stats = SolverStats::default();
    solve_exact_with_stats(problem, DEFAULT_EXACT_CUTOFF, &mut stats)
}

pub fn solve_exact_with_stats(
    problem: &PlacementProblem,
    cutoff: usize,
    stats: &mut SolverStats,
) -> Result<Assignment> {
    let started = Instant::now();
    if problem.functions.len() > cutoff {
        return Err(SimError::Domain(format!(
            "exact solver limited to {cutoff} functions, got {}",
            problem.functions.len()
        )));
    }
    let inst = build_instance(problem)?;
    let n = inst.options.len();
    let use_bound = n >= PLAIN_ENUMERATION_BELOW;
    let soft = matches!(problem.params.sla_mode, SlaMode::Soft { .. });

    let mut state = SearchState {
        device_entries: vec![Vec::new(); problem.devices.len()],
        media_used: vec![0; problem.media.len()],
        base_cost: 0.0,
        violations: 0,
    };
    let mut best: Option<Best> = None;
    let mut choices: ChoiceVec = vec![Choice::Unplaceable; n];
    search(
        &inst,
        0,
        &mut state,
        &mut choices,
        &mut best,
        use_bound,
        soft,
        stats,
    );
    let best = best.expect("search always yields at least one complete assignment");
    let assignment = evaluate(&inst, &best.choices);
    stats.wall_time_us += started.elapsed().as_micros() as u64;
    Ok(assignment)
}

#[allow(clippy::too_many_arguments)]
fn search(
    inst: &Instance<'_>,
    depth: usize,
    state: &mut SearchState,
    choices: &mut ChoiceVec,
    best: &mut Option<Best>,
    use_bound: bool,
    soft: bool,
    stats: &mut SolverStats,
) {
    stats.nodes_expanded += 1;
    if depth == inst.options.len() {
        let assignment = evaluate(inst, choices);
        let objective = assignment.objective();
        let key = canonical_key(inst, choices);
        let better = match best.as_ref() {
            None => true,
            Some(b) => {
                (assignment.violations, objective)
                    .partial_cmp(&(b.violations, b.objective))
                    .unwrap()
                    .then_with(|| key.cmp(&b.key))
                    .is_lt()
            }
        };
        if better {
            *best = Some(Best {
                violations: assignment.violations,
                objective,
                key,
                choices: choices.clone(),
            });
        }
        return;
    }

    // Bound: violations can only grow; remaining functions cost at least
    // their cheapest edges (reconfiguration and lateness only add).
    if use_bound {
        if let Some(b) = best.as_ref() {
            if state.violations > b.violations {
                return;
            }
            let bound = state.base_cost
                + inst.suffix_min[depth]
                + state.violations as f64 * super::VIOLATION_PENALTY_J;
            if state.violations == b.violations && bound > b.objective {
                return;
            }
        }
    }

    let opt = &inst.options[depth];
    let f = &inst.problem.functions[opt.fidx];

    if opt.candidates.is_empty() {
        choices[depth] = Choice::Unplaceable;
        state.violations += 1;
        search(inst, depth + 1, state, choices, best, use_bound, soft, stats);
        state.violations -= 1;
        return;
    }

    for (ci, cand) in opt.candidates.iter().enumerate() {
        // Media budgets are hard constraints for deadline-constrained work.
        let mut budget_ok = true;
        let mut media_delta: BTreeMap<usize, u64> = BTreeMap::new();
        for ((_, bytes), &mi) in opt.objects.iter().zip(&cand.media_idx) {
            *media_delta.entry(mi).or_insert(0) += bytes;
        }
        for (&mi, &bytes) in &media_delta {
            if state.media_used[mi] + bytes > inst.problem.media[mi].bytes_budget {
                budget_ok = false;
                break;
            }
        }
        if !budget_ok {
            continue;
        }

        let entry = PackEntry {
            key: depth,
            app_id: f.app_id.clone(),
            duration: cand.duration,
            deadline_abs: f.deadline_abs(),
            best_effort: false,
        };
        state.device_entries[cand.device_idx].push(entry);
        let feasible = if soft {
            true
        } else {
            device_set_feasible(
                inst,
                cand.device_idx,
                &state.device_entries[cand.device_idx],
            )
        };
        if feasible {
            for (&mi, &bytes) in &media_delta {
                state.media_used[mi] += bytes;
            }
            state.base_cost += cand.base_cost;
            choices[depth] = Choice::Candidate(ci);
            search(inst, depth + 1, state, choices, best, use_bound, soft, stats);
            state.base_cost -= cand.base_cost;
            for (&mi, &bytes) in &media_delta {
                state.media_used[mi] -= bytes;
            }
        }
        state.device_entries[cand.device_idx].pop();
    }

    if !soft {
        // Best-effort fallback: cheapest edge, flagged, packed last, exempt
        // from media budgets.
        let cand = &opt.candidates[0];
        let entry = PackEntry {
            key: depth,
            app_id: f.app_id.clone(),
            duration: cand.duration,
            deadline_abs: f.deadline_abs(),
            best_effort: true,
        };
        state.device_entries[cand.device_idx].push(entry);
        state.base_cost += cand.base_cost;
        state.violations += 1;
        choices[depth] = Choice::BestEffort;
        search(inst, depth + 1, state, choices, best, use_bound, soft, stats);
        state.violations -= 1;
        state.base_cost -= cand.base_cost;
        state.device_entries[cand.device_idx].pop();
    }
}

/// Every deadline-constrained entry on the device meets its deadline under
/// the packing rules. Monotone in the entry set: adding work never makes an
/// infeasible set feasible.
fn device_set_feasible(inst: &Instance<'_>, device_idx: usize, entries: &[PackEntry]) -> bool {
    let slot = &inst.problem.devices[device_idx];
    let packing = pack_device_schedule(slot, inst.problem.now, entries);
    entries
        .iter()
        .zip(&packing.spans)
        .all(|(e, &(_, end))| e.best_effort || end <= e.deadline_abs)
}

/// Greedy assignment by ascending best-edge cost with residual updates.
///
/// Functions are committed cheapest-first; each takes the cheapest placement
/// that is feasible given everything committed so far, falling back to a
/// flagged best-effort placement when none is. The memo cache short-circuits
/// the candidate scan when an earlier window already solved the same
/// (app, residual-state) situation. Never cheaper than `solve_exact` on the
/// same instance.
pub fn solve_heuristic(problem: &PlacementProblem, cache: &mut MemoCache) -> Result<Assignment> {
    let mut stats = SolverStats::default();
    solve_heuristic_with_stats(problem, cache, &mut stats)
}

pub fn solve_heuristic_with_stats(
    problem: &PlacementProblem,
    cache: &mut MemoCache,
    stats: &mut SolverStats,
) -> Result<Assignment> {
    let started = Instant::now();
    let inst = build_instance(problem)?;
    let n = inst.options.len();
    let soft = matches!(problem.params.sla_mode, SlaMode::Soft { .. });

    let mut state = SearchState {
        device_entries: vec![Vec::new(); problem.devices.len()],
        media_used: vec![0; problem.media.len()],
        base_cost: 0.0,
        violations: 0,
    };
    let mut choices: ChoiceVec = vec![Choice::Unplaceable; n];
    let mut unassigned: Vec<usize> = (0..n).collect();

    while !unassigned.is_empty() {
        // Cheapest next commitment across all unassigned functions; the memo
        // cache proposes a candidate before any full scan.
        let mut picked: Option<(f64, usize, usize)> = None; // (cost, pos, candidate)
        let mut scanned: Vec<(usize, Option<usize>, bool)> = Vec::new(); // (pos, cand, from_cache)
        for &pos in &unassigned {
            let (cand_idx, from_cache) =
                best_feasible_candidate(&inst, pos, &state, cache, soft, stats);
            scanned.push((pos, cand_idx, from_cache));
            if let Some(ci) = cand_idx {
                let cost = inst.options[pos].candidates[ci].base_cost;
                let better = match picked {
                    None => true,
                    Some((c, p, _)) => (cost, pos) < (c, p),
                };
                if better {
                    picked = Some((cost, pos, ci));
                }
            }
        }

        let (pos, choice) = match picked {
            Some((_, pos, ci)) => (pos, Choice::Candidate(ci)),
            None => {
                // Nothing can be placed feasibly: flag the lexicographically
                // first remaining function and continue.
                let pos = unassigned[0];
                if inst.options[pos].candidates.is_empty() {
                    (pos, Choice::Unplaceable)
                } else {
                    (pos, Choice::BestEffort)
                }
            }
        };

        let opt = &inst.options[pos];
        let f = &problem.functions[opt.fidx];
        match choice {
            Choice::Candidate(ci) => {
                let cand = &opt.candidates[ci];
                for ((_, bytes), &mi) in opt.objects.iter().zip(&cand.media_idx) {
                    state.media_used[mi] += bytes;
                }
                state.device_entries[cand.device_idx].push(PackEntry {
                    key: pos,
                    app_id: f.app_id.clone(),
                    duration: cand.duration,
                    deadline_abs: f.deadline_abs(),
                    best_effort: false,
                });
                state.base_cost += cand.base_cost;
                remember(cache, &inst, pos, cand, &state, problem);
            }
            Choice::BestEffort => {
                let cand = &opt.candidates[0];
                state.device_entries[cand.device_idx].push(PackEntry {
                    key: pos,
                    app_id: f.app_id.clone(),
                    duration: cand.duration,
                    deadline_abs: f.deadline_abs(),
                    best_effort: true,
                });
                state.base_cost += cand.base_cost;
                state.violations += 1;
            }
            Choice::Unplaceable => {
                state.violations += 1;
            }
        }
        choices[pos] = choice;
        unassigned.retain(|&p| p != pos);
    }

    let assignment = evaluate(&inst, &choices);
    stats.cache_hits = cache.hits;
    stats.cache_misses = cache.misses;
    stats.wall_time_us += started.elapsed().as_micros() as u64;
    Ok(assignment)
}

/// The cheapest candidate for one function that is feasible under the
/// current partial state. Consults the memo cache first; a validated cache
/// proposal is used without scanning the rest.
fn best_feasible_candidate(
    inst: &Instance<'_>,
    pos: usize,
    state: &SearchState,
    cache: &mut MemoCache,
    soft: bool,
    stats: &mut SolverStats,
) -> (Option<usize>, bool) {
    let opt = &inst.options[pos];
    let f = &inst.problem.functions[opt.fidx];
    let sig = residual_signature(inst.problem, state);

    for kind in f.speedup.keys() {
        let key = (f.app_id.clone(), *kind, sig.clone());
        if let Some(cached) = cache.map.get(&key) {
            if let Some(ci) = opt.candidates.iter().position(|c| {
                inst.problem.devices[c.device_idx].device.id == cached.device_id
                    && c.media_idx
                        .iter()
                        .map(|&mi| inst.problem.media[mi].medium.id.as_str())
                        .eq(cached.media.iter().map(|s| s.as_str()))
            }) {
                if candidate_fits(inst, pos, ci, state, soft) {
                    cache.hits += 1;
                    return (Some(ci), true);
                }
            }
        }
    }
    cache.misses += 1;

    for (ci, _) in opt.candidates.iter().enumerate() {
        stats.nodes_expanded += 1;
        if candidate_fits(inst, pos, ci, state, soft) {
            return (Some(ci), false);
        }
    }
    (None, false)
}

fn candidate_fits(
    inst: &Instance<'_>,
    pos: usize,
    ci: usize,
    state: &SearchState,
    soft: bool,
) -> bool {
    let opt = &inst.options[pos];
    let f = &inst.problem.functions[opt.fidx];
    let cand = &opt.candidates[ci];
    let mut media_delta: BTreeMap<usize, u64> = BTreeMap::new();
    for ((_, bytes), &mi) in opt.objects.iter().zip(&cand.media_idx) {
        *media_delta.entry(mi).or_insert(0) += bytes;
    }
    for (&mi, &bytes) in &media_delta {
        if state.media_used[mi] + bytes > inst.problem.media[mi].bytes_budget {
            return false;
        }
    }
    if soft {
        return true;
    }
    let mut entries = state.device_entries[cand.device_idx].clone();
    entries.push(PackEntry {
        key: pos,
        app_id: f.app_id.clone(),
        duration: cand.duration,
        deadline_abs: f.deadline_abs(),
        best_effort: false,
    });
    device_set_feasible(inst, cand.device_idx, &entries)
}

fn remember(
    cache: &mut MemoCache,
    inst: &Instance<'_>,
    pos: usize,
    cand: &Candidate,
    state: &SearchState,
    problem: &PlacementProblem,
) {
    // Key on the residual state at decision time (before this commitment
    // was folded in): recompute from the entries minus the new one.
    let mut pre = SearchState {
        device_entries: state.device_entries.clone(),
        media_used: state.media_used.clone(),
        base_cost: 0.0,
        violations: 0,
    };
    pre.device_entries[cand.device_idx].pop();
    let sig = residual_signature(problem, &pre);
    let f = &problem.functions[inst.options[pos].fidx];
    let kind = problem.devices[cand.device_idx].device.kind;
    cache.map.insert(
        (f.app_id.clone(), kind, sig),
        CachedChoice {
            device_id: problem.devices[cand.device_idx].device.id.clone(),
            media: cand
                .media_idx
                .iter()
                .map(|&mi| problem.media[mi].medium.id.clone())
                .collect(),
        },
    );
}

/// Per-device busy fraction of the window, bucketed to 10% steps.
fn residual_signature(problem: &PlacementProblem, state: &SearchState) -> Vec<u8> {
    let window = (problem.window_end - problem.now).max(1);
    problem
        .devices
        .iter()
        .enumerate()
        .map(|(didx, slot)| {
            let packing = pack_device_schedule(slot, problem.now, &state.device_entries[didx]);
            let busy_until = packing
                .spans
                .iter()
                .map(|&(_, end)| end)
                .max()
                .unwrap_or(slot.available_from)
                .max(slot.available_from)
                .max(problem.now);
            let frac = (busy_until - problem.now) as f64 / window as f64;
            (frac * 10.0).floor().min(10.0) as u8
        })
        .collect()
}

/// Evaluate an externally chosen assignment under the same cost and packing
/// semantics as the solvers: used by baseline policies (round-robin) and
/// for replaying dumped problems. `picks` maps function id to a
/// (device id, object → medium) choice; functions absent from `picks` are
/// reported unplaceable. A pick that is not a valid candidate edge (unknown
/// device, object not available on the chosen medium) is an error.
pub fn commit_assignment(
    problem: &PlacementProblem,
    picks: &BTreeMap<String, (String, BTreeMap<String, String>)>,
) -> Result<Assignment> {
    let inst = build_instance(problem)?;
    let mut choices: ChoiceVec = Vec::with_capacity(inst.options.len());
    for opt in &inst.options {
        let f = &problem.functions[opt.fidx];
        match picks.get(&f.id) {
            None => choices.push(Choice::Unplaceable),
            Some((device_id, media)) => {
                let ci = opt
                    .candidates
                    .iter()
                    .position(|c| {
                        problem.devices[c.device_idx].device.id == *device_id
                            && opt.objects.iter().zip(&c.media_idx).all(|((o, _), &mi)| {
                                media.get(o).map(|m| *m == problem.media[mi].medium.id)
                                    == Some(true)
                            })
                    })
                    .ok_or_else(|| {
                        SimError::Domain(format!(
                            "no candidate edge for '{}' on '{device_id}' with media {media:?}",
                            f.id
                        ))
                    })?;
                choices.push(Choice::Candidate(ci));
            }
        }
    }
    Ok(evaluate(&inst, &choices))
}

/// Fractional relaxation value: functions divisible across devices, media
/// budgets relaxed. Never exceeds the exact optimum's energy. Equals
/// Σ per-function cheapest edge when capacities never bind; FPGA
/// reconfiguration energy enters divided by the app's multiplicity, which
/// keeps the bound valid when several functions share one configuration.
/// When such shares enter, the result backs off by 1e-12 relative: the
/// shares regroup the startup sum differently from the solver, and the
/// back-off absorbs the floating-point regrouping error (far larger than
/// machine epsilon times the term count) without weakening the bound
/// meaningfully.
pub fn lower_bound(problem: &PlacementProblem) -> Result<f64> {
    let inst = build_instance(problem)?;
    let mut app_count: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &problem.functions {
        *app_count.entry(f.app_id.as_str()).or_insert(0) += 1;
    }
    let mut total = 0.0;
    let mut any_share = false;
    for opt in &inst.options {
        let f = &problem.functions[opt.fidx];
        let k = app_count[f.app_id.as_str()] as f64;
        let best = opt
            .candidates
            .iter()
            .map(|c| {
                let slot = &problem.devices[c.device_idx];
                let share = if slot.device.kind == DeviceKind::FPGA
                    && slot.configured_app.as_deref() != Some(f.app_id.as_str())
                {
                    slot.device.startup_energy / k
                } else {
                    0.0
                };
                (c.base_cost + share, share > 0.0)
            })
            .fold((f64::INFINITY, false), |acc, x| {
                if x.0 < acc.0 {
                    x
                } else {
                    acc
                }
            });
        if best.0.is_finite() {
            total += best.0;
            any_share |= best.1;
        }
    }
    if any_share {
        total *= 1.0 - 1e-12;
    }
    Ok(total)
}

/// Solve the problem with all deadlines scaled by each λ, ascending.
///
/// Returns (λ, objective) pairs; the objective is energy plus the violation
/// penalty, so relaxing deadlines never increases it.
pub fn pareto_sweep(problem: &PlacementProblem, scales: &[f64]) -> Result<Vec<(f64, f64)>> {
    if scales.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::Domain("deadline scales must be ascending".into()));
    }
    if scales.iter().any(|l| *l < 0.0) {
        return Err(SimError::Domain("deadline scales must be >= 0".into()));
    }
    let mut out = Vec::with_capacity(scales.len());
    for &lambda in scales {
        let mut scaled = problem.clone();
        for f in &mut scaled.functions {
            let d = (f.sla.deadline_us as f64 * lambda).round().max(1.0) as u64;
            f.sla.deadline_us = d;
        }
        let assignment = solve_exact(&scaled)?;
        out.push((lambda, assignment.objective()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::{ComputeDevice, StorageMedium, StorageTier};
    use crate::placement::{CostParams, DeviceSlot, MediumSlot};
    use crate::workload::{Access, MicroFunction, Sla};
    use std::collections::BTreeSet;

    fn device(id: &str, kind: DeviceKind, peak: f64, capacity: f64) -> ComputeDevice {
        ComputeDevice {
            id: id.to_string(),
            kind,
            peak_power: peak,
            idle_fraction: 0.5,
            capacity,
            startup_latency: 0,
            startup_energy: 0.0,
            embodied_rate: 0.0,
        }
    }

    fn medium(id: &str) -> StorageMedium {
        StorageMedium {
            id: id.to_string(),
            tier: StorageTier::DRAM,
            capacity: 1 << 40,
            active_power_per_bw: 1e-10,
            idle_power_per_byte: 1e-10,
            access_latency_p50: 1,
            access_latency_tail: 2,
            bandwidth: 1e10,
            remote_access_penalty: 0,
        }
    }

    fn function(id: &str, work: f64, deadline: u64) -> MicroFunction {
        MicroFunction {
            id: id.to_string(),
            app_id: "A1".to_string(),
            arrival_us: 0,
            work,
            speedup: BTreeMap::from([(DeviceKind::CPU, 1.0)]),
            reads: Vec::new(),
            writes: Vec::new(),
            sla: Sla::hard(deadline),
            energy_budget_j: None,
            parent: None,
        }
    }

    fn problem(functions: Vec<MicroFunction>, devices: Vec<ComputeDevice>) -> PlacementProblem {
        PlacementProblem {
            functions,
            devices: devices.into_iter().map(DeviceSlot::new).collect(),
            media: vec![MediumSlot::unbounded(medium("dram0"))],
            object_locations: BTreeMap::new(),
            now: 0,
            window_end: 1000,
            params: CostParams::default(),
        }
    }

    #[test]
    fn exact_picks_cheaper_of_two_devices() {
        // Identical durations; cpu_b draws less marginal power.
        let p = problem(
            vec![function("f1", 1e5, 1_000_000)],
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 40.0, 1e6),
            ],
        );
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.placements["f1"].device_id, "cpu_b");
        assert_eq!(a.violations, 0);
    }

    #[test]
    fn exact_flags_impossible_deadlines() {
        // 1 s of work against a 10 µs deadline on every device.
        let p = problem(
            vec![function("f1", 1e6, 10), function("f2", 1e6, 10)],
            vec![device("cpu_a", DeviceKind::CPU, 100.0, 1e6)],
        );
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.violations, 2);
        assert!(a.placements.values().all(|pl| !pl.feasible));
    }

    #[test]
    fn exact_respects_cutoff_precondition() {
        let fns: Vec<MicroFunction> = (0..13)
            .map(|i| function(&format!("f{i:02}"), 100.0, 1_000_000))
            .collect();
        let p = problem(fns, vec![device("cpu_a", DeviceKind::CPU, 100.0, 1e6)]);
        assert!(solve_exact(&p).is_err());
    }

    #[test]
    fn exact_is_deterministic_across_calls() {
        let fns: Vec<MicroFunction> = (0..6)
            .map(|i| function(&format!("f{i}"), 1e4 * (i + 1) as f64, 500_000))
            .collect();
        let p = problem(
            fns,
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 100.0, 1e6),
            ],
        );
        let a = solve_exact(&p).unwrap();
        let b = solve_exact(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_ties_break_lexicographically() {
        // Two identical devices: equal cost either way, so the tie-break
        // must put f1 on the lexicographically smaller device id.
        let p = problem(
            vec![function("f1", 1e4, 1_000_000)],
            vec![
                device("cpu_b", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
            ],
        );
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.placements["f1"].device_id, "cpu_a");
    }

    #[test]
    fn heuristic_equals_exact_without_contention() {
        let fns: Vec<MicroFunction> = (0..4)
            .map(|i| function(&format!("f{i}"), 1e3 * (i + 1) as f64, 1_000_000))
            .collect();
        let p = problem(
            fns,
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 30.0, 1e6),
            ],
        );
        let exact = solve_exact(&p).unwrap();
        let mut cache = MemoCache::new();
        let heuristic = solve_heuristic(&p, &mut cache).unwrap();
        assert_eq!(exact.total_cost.to_bits(), heuristic.total_cost.to_bits());
        assert_eq!(exact.violations, heuristic.violations);
    }

    #[test]
    fn heuristic_memo_serves_repeated_windows() {
        let fns: Vec<MicroFunction> = (0..8)
            .map(|i| function(&format!("f{i}"), 1e3, 1_000_000))
            .collect();
        let p = problem(
            fns,
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 30.0, 1e6),
            ],
        );
        let mut cache = MemoCache::new();
        let first = solve_heuristic(&p, &mut cache).unwrap();
        let hits_after_first = cache.hits;
        let second = solve_heuristic(&p, &mut cache).unwrap();
        assert_eq!(first, second);
        // At least half of the second window's decisions come from cache.
        let second_hits = cache.hits - hits_after_first;
        assert!(
            second_hits as usize >= p.functions.len() / 2,
            "second-window cache hits = {second_hits}"
        );
    }

    #[test]
    fn lower_bound_single_function_equals_exact() {
        let p = problem(
            vec![function("f1", 1e5, 1_000_000)],
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 40.0, 1e6),
            ],
        );
        let lb = lower_bound(&p).unwrap();
        let exact = solve_exact(&p).unwrap();
        assert_eq!(lb.to_bits(), exact.total_cost.to_bits());
    }

    #[test]
    fn lower_bound_slack_capacity_is_sum_of_cheapest_edges() {
        let fns: Vec<MicroFunction> = (0..5)
            .map(|i| function(&format!("f{i}"), 1e3 * (i + 1) as f64, 10_000_000))
            .collect();
        let p = problem(
            fns.clone(),
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 40.0, 1e6),
            ],
        );
        let lb = lower_bound(&p).unwrap();
        let exact = solve_exact(&p).unwrap();
        // Nothing binds: every function takes its cheapest edge.
        assert_eq!(lb.to_bits(), exact.total_cost.to_bits());
    }

    #[test]
    fn pareto_lambda_one_matches_plain_solve() {
        let fns: Vec<MicroFunction> = (0..3)
            .map(|i| function(&format!("f{i}"), 1e4 * (i + 1) as f64, 100_000))
            .collect();
        let p = problem(
            fns,
            vec![
                device("cpu_a", DeviceKind::CPU, 100.0, 1e6),
                device("cpu_b", DeviceKind::CPU, 40.0, 1e6),
            ],
        );
        let sweep = pareto_sweep(&p, &[1.0, 2.0, 4.0]).unwrap();
        let exact = solve_exact(&p).unwrap();
        assert_eq!(sweep[0].1.to_bits(), exact.objective().to_bits());
        for w in sweep.windows(2) {
            assert!(w[1].1 <= w[0].1, "{sweep:?}");
        }
    }

    #[test]
    fn pareto_rejects_unsorted_scales() {
        let p = problem(
            vec![function("f1", 1e3, 1000)],
            vec![device("cpu_a", DeviceKind::CPU, 100.0, 1e6)],
        );
        assert!(pareto_sweep(&p, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn media_budget_forces_alternate_medium() {
        let mut f = function("f1", 1e3, 1_000_000);
        f.reads = vec![Access {
            object_id: "o1".into(),
            bytes: 1000,
        }];
        let mut cheap = medium("m_cheap");
        cheap.active_power_per_bw = 1e-12;
        let mut dear = medium("m_dear");
        dear.active_power_per_bw = 1e-9;
        let mut p = problem(vec![f], vec![device("cpu_a", DeviceKind::CPU, 100.0, 1e6)]);
        p.media = vec![
            MediumSlot {
                medium: cheap,
                bytes_budget: 10, // too small for the access
            },
            MediumSlot::unbounded(dear),
        ];
        p.object_locations =
            BTreeMap::from([("o1".to_string(), BTreeSet::from(["m_cheap".to_string(), "m_dear".to_string()]))]);
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.placements["f1"].media_choice["o1"], "m_dear");
        assert_eq!(a.violations, 0);
    }

    #[test]
    fn soft_mode_prices_lateness_instead_of_flagging() {
        let mut p = problem(
            vec![function("f1", 1e6, 10)], // impossible deadline
            vec![device("cpu_a", DeviceKind::CPU, 100.0, 1e6)],
        );
        p.params.sla_mode = SlaMode::Soft {
            penalty_j_per_us: 1e-6,
        };
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.violations, 1);
        let pl = &a.placements["f1"];
        let lateness = pl.end_us - 10;
        let expected = pl.cost.total + 1e-6 * lateness as f64;
        assert!((a.total_cost - expected).abs() < 1e-12);
    }

    #[test]
    fn unplaceable_function_reported_not_placed() {
        let mut f = function("f1", 1e3, 1000);
        f.speedup = BTreeMap::from([(DeviceKind::GPU, 1.0)]);
        let p = problem(vec![f], vec![device("cpu_a", DeviceKind::CPU, 100.0, 1e6)]);
        let a = solve_exact(&p).unwrap();
        assert_eq!(a.violations, 1);
        assert!(a.placements.is_empty());
    }

    #[test]
    fn fpga_startup_charged_once_per_app_group() {
        let mut fpga = device("fpga0", DeviceKind::FPGA, 5.0, 1e6);
        fpga.startup_energy = 0.25;
        fpga.startup_latency = 10;
        let mut fns = Vec::new();
        for i in 0..3 {
            let mut f = function(&format!("f{i}"), 1e4, 1_000_000);
            f.speedup = BTreeMap::from([(DeviceKind::FPGA, 2.0)]);
            fns.push(f);
        }
        let p = problem(fns, vec![fpga]);
        let a = solve_exact(&p).unwrap();
        let charged: Vec<&Placement> = a
            .placements
            .values()
            .filter(|pl| pl.cost.compute_energy > 0.2)
            .collect();
        assert_eq!(charged.len(), 1, "exactly one function carries startup");
        assert_eq!(a.violations, 0);
    }
}
