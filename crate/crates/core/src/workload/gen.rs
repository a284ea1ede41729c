//! Seeded synthetic trace generation.
//!
//! Arrivals are drawn from a two-state modulated Poisson process: time is
//! divided into periods of `burst_period_us`; each period spends the first
//! `burst_duty` fraction in the burst state (rate `burst_rate`) and the rest
//! in the base state (rate `base_rate`). Sampling inverts the piecewise
//! linear cumulative hazard against unit exponentials, so the process is
//! exact and fully determined by the seed.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{Access, MicroFunction, Sla};
use crate::error::{Result, SimError};
use crate::hardware::DeviceKind;
use crate::rng::substream;
use crate::units::US_PER_SEC;

/// A scalar sampling distribution for per-app workload parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dist {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl Dist {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Dist::Fixed { value } => *value,
            Dist::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
            Dist::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                e * mean
            }
        }
    }

    fn validate(&self, what: &str) -> Vec<String> {
        match self {
            Dist::Fixed { value } if !(*value > 0.0) => {
                vec![format!("{what}: fixed value must be > 0")]
            }
            Dist::Uniform { lo, hi } if !(*lo > 0.0 && hi >= lo) => {
                vec![format!("{what}: uniform bounds must satisfy 0 < lo <= hi")]
            }
            Dist::Exponential { mean } if !(*mean > 0.0) => {
                vec![format!("{what}: exponential mean must be > 0")]
            }
            _ => Vec::new(),
        }
    }
}

/// A data object an app's functions may access.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub object_id: String,
    pub bytes: u64,
}

/// Per-app workload shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppProfile {
    /// Probability this app is chosen for an arrival; weights sum to 1.
    pub weight: f64,
    pub work: Dist,
    pub speedup: BTreeMap<DeviceKind, f64>,
    pub deadline_us: Dist,
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Probability each app object is read by an invocation.
    #[serde(default = "default_read_fraction")]
    pub read_fraction: f64,
    /// Probability each app object is written by an invocation.
    #[serde(default)]
    pub write_fraction: f64,
    /// RPC children spawned per root arrival (same profile, parent link set).
    #[serde(default)]
    pub fanout: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_budget_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_budget_g: Option<f64>,
}

fn default_percentile() -> f64 {
    1.0
}

fn default_read_fraction() -> f64 {
    1.0
}

/// Specification of a synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub duration_us: u64,
    /// Arrival rate in the base state, arrivals/second.
    pub base_rate: f64,
    /// Arrival rate in the burst state, arrivals/second.
    pub burst_rate: f64,
    /// Fraction of each period spent in the burst state, in [0, 1].
    pub burst_duty: f64,
    /// Length of one base/burst alternation period, µs.
    pub burst_period_us: u64,
    pub seed: u64,
    pub apps: BTreeMap<String, AppProfile>,
}

impl TraceSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: TraceSpec =
            toml::from_str(text).map_err(|e| SimError::Validation(format!("trace spec: {e}")))?;
        let errs = spec.validate();
        if errs.is_empty() {
            Ok(spec)
        } else {
            Err(SimError::Validation(errs.join("; ")))
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.base_rate < 0.0 || self.burst_rate < 0.0 {
            errs.push("rates must be >= 0".to_string());
        }
        if !(0.0..=1.0).contains(&self.burst_duty) {
            errs.push("burst_duty must be in [0, 1]".to_string());
        }
        if self.burst_period_us == 0 && self.burst_duty > 0.0 && self.burst_duty < 1.0 {
            errs.push("burst_period_us must be > 0 when alternating states".to_string());
        }
        if self.apps.is_empty() {
            errs.push("at least one app profile required".to_string());
        }
        let weight_sum: f64 = self.apps.values().map(|a| a.weight).sum();
        if !self.apps.is_empty() && (weight_sum - 1.0).abs() > 1e-9 {
            errs.push(format!("app weights sum to {weight_sum}, expected 1 ± 1e-9"));
        }
        for (app, profile) in &self.apps {
            if profile.weight < 0.0 {
                errs.push(format!("app '{app}': weight must be >= 0"));
            }
            errs.extend(profile.work.validate(&format!("app '{app}' work")));
            errs.extend(
                profile
                    .deadline_us
                    .validate(&format!("app '{app}' deadline_us")),
            );
            if profile.speedup.is_empty() {
                errs.push(format!("app '{app}': speedup map is empty"));
            }
            for (kind, s) in &profile.speedup {
                if !(*s > 0.0) {
                    errs.push(format!(
                        "app '{app}': speedup for {} must be > 0",
                        kind.as_str()
                    ));
                }
            }
            if !(0.0..=1.0).contains(&profile.read_fraction)
                || !(0.0..=1.0).contains(&profile.write_fraction)
            {
                errs.push(format!("app '{app}': access fractions must be in [0, 1]"));
            }
            for o in &profile.objects {
                if o.bytes == 0 {
                    errs.push(format!("app '{app}': object '{}' has 0 bytes", o.object_id));
                }
            }
        }
        errs
    }

    /// All data objects declared by app profiles (deduplicated by id).
    pub fn declared_objects(&self) -> Vec<ObjectSpec> {
        let mut seen = BTreeMap::new();
        for profile in self.apps.values() {
            for o in &profile.objects {
                seen.entry(o.object_id.clone()).or_insert_with(|| o.clone());
            }
        }
        seen.into_values().collect()
    }

    /// Arrival rate at absolute time `t`, arrivals/second.
    fn rate_at(&self, t_us: u64) -> f64 {
        if self.burst_period_us == 0 || self.burst_duty >= 1.0 {
            return if self.burst_duty >= 1.0 {
                self.burst_rate
            } else {
                self.base_rate
            };
        }
        let phase = t_us % self.burst_period_us;
        let burst_len = (self.burst_duty * self.burst_period_us as f64) as u64;
        if phase < burst_len {
            self.burst_rate
        } else {
            self.base_rate
        }
    }

    /// Boundaries of constant-rate segments covering [0, duration).
    fn segments(&self) -> Vec<(u64, u64, f64)> {
        let mut segs = Vec::new();
        if self.duration_us == 0 {
            return segs;
        }
        if self.burst_period_us == 0 || self.burst_duty >= 1.0 || self.burst_duty <= 0.0 {
            segs.push((0, self.duration_us, self.rate_at(0)));
            return segs;
        }
        let burst_len = (self.burst_duty * self.burst_period_us as f64) as u64;
        let mut start = 0u64;
        while start < self.duration_us {
            let period_start = start - start % self.burst_period_us;
            let burst_end = period_start + burst_len;
            let period_end = period_start + self.burst_period_us;
            let seg_end = if start < burst_end { burst_end } else { period_end };
            let seg_end = seg_end.min(self.duration_us);
            if seg_end > start {
                segs.push((start, seg_end, self.rate_at(start)));
            }
            start = seg_end;
        }
        segs
    }
}

/// Generate a trace from the spec. Fully determined by `spec.seed`; output
/// is sorted by arrival time. A zero-duration spec yields an empty trace.
pub fn generate_trace(spec: &TraceSpec) -> Result<Vec<MicroFunction>> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(SimError::Validation(errs.join("; ")));
    }

    let mut rng = substream(spec.seed, "trace");
    let arrivals = sample_arrivals(spec, &mut rng);

    let apps: Vec<(&String, &AppProfile)> = spec.apps.iter().collect();
    let weights: Vec<f64> = apps.iter().map(|(_, p)| p.weight).collect();

    let mut trace = Vec::with_capacity(arrivals.len());
    let mut seq = 0usize;
    for arrival in arrivals {
        let app_idx = weighted_choice(&weights, rng.random::<f64>());
        let (app_id, profile) = apps[app_idx];
        let root_id = format!("f{seq:07}");
        seq += 1;
        let root = instantiate(&root_id, app_id, profile, arrival, None, &mut rng);
        trace.push(root);
        for c in 0..profile.fanout {
            let child_id = format!("f{:07}.c{c}", seq - 1);
            let child = instantiate(
                &child_id,
                app_id,
                profile,
                arrival,
                Some(format!("f{:07}", seq - 1)),
                &mut rng,
            );
            trace.push(child);
        }
    }
    trace.sort_by(|a, b| a.arrival_us.cmp(&b.arrival_us).then(a.id.cmp(&b.id)));
    Ok(trace)
}

fn instantiate<R: Rng>(
    id: &str,
    app_id: &str,
    profile: &AppProfile,
    arrival: u64,
    parent: Option<String>,
    rng: &mut R,
) -> MicroFunction {
    let work = profile.work.sample(rng).max(f64::MIN_POSITIVE);
    let deadline = profile.deadline_us.sample(rng).max(1.0).round() as u64;
    let mut reads = Vec::new();
    let mut writes = Vec::new();
    for o in &profile.objects {
        if rng.random::<f64>() < profile.read_fraction {
            reads.push(Access {
                object_id: o.object_id.clone(),
                bytes: o.bytes,
            });
        }
        if rng.random::<f64>() < profile.write_fraction {
            writes.push(Access {
                object_id: o.object_id.clone(),
                bytes: o.bytes,
            });
        }
    }
    MicroFunction {
        id: id.to_string(),
        app_id: app_id.to_string(),
        arrival_us: arrival,
        work,
        speedup: profile.speedup.clone(),
        reads,
        writes,
        sla: Sla {
            deadline_us: deadline,
            percentile: profile.percentile,
            carbon_budget_g: profile.carbon_budget_g,
        },
        energy_budget_j: profile.energy_budget_j,
        parent,
    }
}

/// Invert the piecewise-linear cumulative hazard against unit exponentials.
fn sample_arrivals<R: Rng>(spec: &TraceSpec, rng: &mut R) -> Vec<u64> {
    let mut arrivals = Vec::new();
    let mut hazard_target: f64 = Exp1.sample(rng);
    let mut hazard_done = 0.0;
    for (seg_start, seg_end, rate) in spec.segments() {
        if rate <= 0.0 {
            continue;
        }
        let seg_len_sec = (seg_end - seg_start) as f64 / US_PER_SEC as f64;
        let seg_hazard = rate * seg_len_sec;
        while hazard_target <= hazard_done + seg_hazard {
            let dt_sec = (hazard_target - hazard_done) / rate;
            let t = seg_start + (dt_sec * US_PER_SEC as f64) as u64;
            if t < seg_end {
                arrivals.push(t.min(spec.duration_us.saturating_sub(1)));
            }
            let step: f64 = Exp1.sample(rng);
            hazard_target += step;
        }
        hazard_done += seg_hazard;
    }
    arrivals
}

fn weighted_choice(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let target = u * total;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::validate_trace;

    pub(crate) fn basic_spec(seed: u64) -> TraceSpec {
        TraceSpec {
            duration_us: 10 * US_PER_SEC,
            base_rate: 1000.0,
            burst_rate: 1000.0,
            burst_duty: 0.0,
            burst_period_us: 100_000,
            seed,
            apps: BTreeMap::from([(
                "A1".to_string(),
                AppProfile {
                    weight: 1.0,
                    work: Dist::Fixed { value: 100.0 },
                    speedup: BTreeMap::from([(DeviceKind::CPU, 1.0)]),
                    deadline_us: Dist::Fixed { value: 10_000.0 },
                    percentile: 1.0,
                    objects: Vec::new(),
                    read_fraction: 1.0,
                    write_fraction: 0.0,
                    fanout: 0,
                    energy_budget_j: None,
                    carbon_budget_g: None,
                },
            )]),
        }
    }

    #[test]
    fn same_seed_bit_identical() {
        for seed in 0..10 {
            let a = generate_trace(&basic_spec(seed)).unwrap();
            let b = generate_trace(&basic_spec(seed)).unwrap();
            let mut buf_a = Vec::new();
            let mut buf_b = Vec::new();
            crate::workload::serialize_trace(&a, &mut buf_a).unwrap();
            crate::workload::serialize_trace(&b, &mut buf_b).unwrap();
            assert_eq!(buf_a, buf_b);
        }
    }

    #[test]
    fn zero_duration_yields_empty_trace() {
        let mut spec = basic_spec(1);
        spec.duration_us = 0;
        assert!(generate_trace(&spec).unwrap().is_empty());
    }

    #[test]
    fn arrivals_sorted_and_valid() {
        let mut spec = basic_spec(5);
        spec.burst_rate = 4000.0;
        spec.burst_duty = 0.25;
        let trace = generate_trace(&spec).unwrap();
        assert!(validate_trace(&trace).is_empty());
        assert!(trace.windows(2).all(|w| w[0].arrival_us <= w[1].arrival_us));
    }

    #[test]
    fn empirical_rate_within_three_sigma() {
        // Plain Poisson at 1000/s over 10 s: E[N] = 10_000, σ = 100.
        let trace = generate_trace(&basic_spec(42)).unwrap();
        let n = trace.len() as f64;
        assert!((n - 10_000.0).abs() <= 300.0, "count = {n}");
    }

    #[test]
    fn burst_equal_base_matches_plain_poisson() {
        // With burst_rate == base_rate the segment structure must not alter
        // the draw sequence: duty 0 vs duty 0.5 give the same arrivals.
        let flat = generate_trace(&basic_spec(7)).unwrap();
        let mut spec = basic_spec(7);
        spec.burst_duty = 0.5;
        let alternating = generate_trace(&spec).unwrap();
        let times_a: Vec<u64> = flat.iter().map(|f| f.arrival_us).collect();
        let times_b: Vec<u64> = alternating.iter().map(|f| f.arrival_us).collect();
        assert_eq!(times_a, times_b);
    }

    #[test]
    fn burst_state_raises_local_rate() {
        let mut spec = basic_spec(9);
        spec.base_rate = 200.0;
        spec.burst_rate = 8000.0;
        spec.burst_duty = 0.2;
        spec.burst_period_us = 1_000_000;
        let trace = generate_trace(&spec).unwrap();
        let in_burst = trace
            .iter()
            .filter(|f| f.arrival_us % spec.burst_period_us < 200_000)
            .count();
        let out_burst = trace.len() - in_burst;
        // Burst windows hold 20% of time but rate is 40x: expect in-burst
        // arrivals to dominate (8000*0.2 = 1600/s vs 200*0.8 = 160/s).
        assert!(in_burst > 5 * out_burst, "{in_burst} vs {out_burst}");
    }

    #[test]
    fn fanout_children_link_to_parents() {
        let mut spec = basic_spec(11);
        spec.duration_us = US_PER_SEC / 10;
        spec.apps.get_mut("A1").unwrap().fanout = 2;
        let trace = generate_trace(&spec).unwrap();
        assert!(validate_trace(&trace).is_empty());
        let children = trace.iter().filter(|f| f.parent.is_some()).count();
        assert_eq!(children, 2 * (trace.len() - children));
    }

    #[test]
    fn generated_trace_validates_clean() {
        let mut spec = basic_spec(13);
        spec.apps.get_mut("A1").unwrap().objects = vec![ObjectSpec {
            object_id: "A11".into(),
            bytes: 4096,
        }];
        spec.apps.get_mut("A1").unwrap().write_fraction = 0.3;
        let trace = generate_trace(&spec).unwrap();
        assert!(validate_trace(&trace).is_empty());
    }

    #[test]
    fn bad_weights_rejected() {
        let mut spec = basic_spec(1);
        spec.apps.get_mut("A1").unwrap().weight = 0.7;
        let err = generate_trace(&spec).unwrap_err();
        assert!(err.to_string().contains("weights"), "{err}");
    }
}
