//! Energy provenance: attributing direct and indirect energy to functions.
//!
//! A linear model over software-visible telemetry features estimates each
//! function's direct energy; every accounting interval the ledger closes by
//! distributing the residual between estimated and measured energy as idle
//! share; RPC call-graph aggregation then rolls descendant energy up to the
//! callers, and grid intensity converts energy to carbon.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hardware::{intensity_at, CarbonIntensitySeries};
use crate::units::JOULES_PER_KWH;

/// The canonical telemetry feature set.
pub const CANONICAL_FEATURES: [&str; 5] = [
    "cpu_cycles",
    "accelerator_cycles",
    "network_bytes",
    "storage_bytes_moved",
    "byte_seconds_resident",
];

/// One telemetry observation for a function on a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub function_id: String,
    pub device_id: String,
    /// Feature name → magnitude; all magnitudes >= 0.
    pub features: BTreeMap<String, f64>,
}

impl TelemetrySample {
    pub fn validate(&self) -> Vec<String> {
        self.features
            .iter()
            .filter(|(_, v)| **v < 0.0 || !v.is_finite())
            .map(|(k, _)| format!("sample for '{}': feature '{k}' must be >= 0", self.function_id))
            .collect()
    }
}

/// Linear attribution model: joules per feature unit plus a per-sample
/// baseline intercept capturing idle/system overhead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionModel {
    pub coefficients: BTreeMap<String, f64>,
    pub baseline: f64,
}

/// Fit quality alongside the fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: AttributionModel,
    pub rmse: f64,
    pub max_abs_residual: f64,
    pub samples: usize,
}

/// Per-function lifecycle energy ledger entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub function_id: String,
    pub app_id: String,
    /// Energy estimated for the function's own resource use, joules.
    pub direct_energy: f64,
    /// This function's share of unattributed (idle/system) energy, joules.
    pub idle_share: f64,
    /// Sum over RPC children of (direct + idle_share + descendant), joules.
    pub descendant_energy: f64,
    /// Operational carbon for direct + idle energy, grams CO2e.
    pub carbon: f64,
}

/// How interval residual energy is distributed across functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdleAttribution {
    /// Proportional to each function's direct estimate (default).
    Proportional,
    /// Equal split across functions present in the interval.
    Equal,
    /// All residual booked to the operator account.
    OperatorOnly,
}

impl Default for IdleAttribution {
    fn default() -> Self {
        IdleAttribution::Proportional
    }
}

impl std::str::FromStr for IdleAttribution {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proportional" => Ok(IdleAttribution::Proportional),
            "equal" => Ok(IdleAttribution::Equal),
            "operator-only" => Ok(IdleAttribution::OperatorOnly),
            other => Err(SimError::Unknown {
                what: "idle attribution mode",
                got: other.to_string(),
                valid: vec!["proportional", "equal", "operator-only"],
            }),
        }
    }
}

/// Closed books for one accounting interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalAttribution {
    /// function id → (direct, idle_share), joules.
    pub per_function: BTreeMap<String, (f64, f64)>,
    /// Residual booked to the reserved operator account, joules.
    pub operator_residual: f64,
}

/// Estimated energy for one sample: baseline + Σ coeff · feature.
pub fn estimate_energy(model: &AttributionModel, sample: &TelemetrySample) -> Result<f64> {
    let mut total = model.baseline;
    for (name, magnitude) in &sample.features {
        let coeff = model.coefficients.get(name).ok_or_else(|| {
            SimError::Domain(format!("feature '{name}' not present in model"))
        })?;
        total += coeff * magnitude;
    }
    Ok(total)
}

/// Least-squares fit of coefficients and baseline from labelled samples.
///
/// Coefficients are constrained non-negative: negative fits are projected to
/// zero and the remaining features refitted, since negative marginal energy
/// is unphysical. Needs at least `features + 1` samples and a full-rank
/// design; a rank-deficient design fails naming the collinear column.
pub fn fit_model(samples: &[(TelemetrySample, f64)]) -> Result<FitReport> {
    let mut names: Vec<String> = samples
        .iter()
        .flat_map(|(s, _)| s.features.keys().cloned())
        .collect();
    names.sort();
    names.dedup();
    if samples.len() < names.len() + 1 {
        return Err(SimError::Domain(format!(
            "need at least {} samples for {} features, got {}",
            names.len() + 1,
            names.len(),
            samples.len()
        )));
    }

    let mut active: Vec<String> = names.clone();
    loop {
        let (beta, _) = solve_least_squares(samples, &active)?;
        // beta[0] is the intercept; feature coefficients follow.
        let negatives: Vec<String> = active
            .iter()
            .zip(beta.iter().skip(1))
            .filter(|(_, b)| **b < 0.0)
            .map(|(n, _)| n.clone())
            .collect();
        if negatives.is_empty() {
            let mut coefficients: BTreeMap<String, f64> =
                names.iter().map(|n| (n.clone(), 0.0)).collect();
            for (n, b) in active.iter().zip(beta.iter().skip(1)) {
                coefficients.insert(n.clone(), *b);
            }
            let model = AttributionModel {
                coefficients,
                baseline: beta[0],
            };
            let mut sq_sum = 0.0;
            let mut max_abs: f64 = 0.0;
            for (s, y) in samples {
                let r = estimate_energy(&model, s)? - y;
                sq_sum += r * r;
                max_abs = max_abs.max(r.abs());
            }
            return Ok(FitReport {
                model,
                rmse: (sq_sum / samples.len() as f64).sqrt(),
                max_abs_residual: max_abs,
                samples: samples.len(),
            });
        }
        active.retain(|n| !negatives.contains(n));
    }
}

/// Ordinary least squares over the intercept plus the named feature columns,
/// via modified Gram-Schmidt QR. Returns (beta, column names used).
fn solve_least_squares(
    samples: &[(TelemetrySample, f64)],
    features: &[String],
) -> Result<(Vec<f64>, Vec<String>)> {
    let n = samples.len();
    let k = features.len() + 1; // intercept first
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    cols.push(vec![1.0; n]);
    for name in features {
        cols.push(
            samples
                .iter()
                .map(|(s, _)| s.features.get(name).copied().unwrap_or(0.0))
                .collect(),
        );
    }
    let y: Vec<f64> = samples.iter().map(|(_, v)| *v).collect();

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = vec![vec![0.0; k]; k];
    for (j, col) in cols.iter().enumerate() {
        let norm0 = norm(col);
        let mut v = col.clone();
        for (i, qi) in q.iter().enumerate() {
            let rij = dot(qi, &v);
            r[i][j] = rij;
            for (vv, qq) in v.iter_mut().zip(qi) {
                *vv -= rij * qq;
            }
        }
        let rjj = norm(&v);
        if rjj <= 1e-10 * norm0.max(1.0) {
            let column = if j == 0 {
                "<intercept>".to_string()
            } else {
                features[j - 1].clone()
            };
            let dependents = if j == 0 {
                Vec::new()
            } else {
                let mut deps: Vec<String> =
                    features[..j - 1].iter().cloned().collect();
                deps.insert(0, "<intercept>".to_string());
                deps
            };
            return Err(SimError::RankDeficient { column, dependents });
        }
        r[j][j] = rjj;
        for vv in v.iter_mut() {
            *vv /= rjj;
        }
        q.push(v);
    }

    // Back-substitute R beta = Q^T y.
    let qty: Vec<f64> = q.iter().map(|qi| dot(qi, &y)).collect();
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut acc = qty[j];
        for m in j + 1..k {
            acc -= r[j][m] * beta[m];
        }
        beta[j] = acc / r[j][j];
    }
    Ok((beta, features.to_vec()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Close the books for one accounting interval.
///
/// Direct energy per function is the model estimate summed over its samples;
/// the residual against the measured total is distributed per `mode`. The
/// returned shares satisfy Σ(direct + idle) + operator = measured_total.
/// An interval with no samples books everything to the operator account.
pub fn attribute_interval(
    model: &AttributionModel,
    samples: &[TelemetrySample],
    measured_total: f64,
    mode: IdleAttribution,
) -> Result<IntervalAttribution> {
    let mut direct: BTreeMap<String, f64> = BTreeMap::new();
    for s in samples {
        let e = estimate_energy(model, s)?;
        *direct.entry(s.function_id.clone()).or_insert(0.0) += e;
    }
    let direct_sum: f64 = direct.values().sum();
    let residual = measured_total - direct_sum;

    let mut per_function = BTreeMap::new();
    let mut operator_residual = 0.0;
    if direct.is_empty() {
        operator_residual = residual;
    } else {
        match mode {
            IdleAttribution::OperatorOnly => {
                operator_residual = residual;
                for (fid, d) in direct {
                    per_function.insert(fid, (d, 0.0));
                }
            }
            IdleAttribution::Equal => {
                let share = residual / direct.len() as f64;
                for (fid, d) in direct {
                    per_function.insert(fid, (d, share));
                }
            }
            IdleAttribution::Proportional => {
                if direct_sum == 0.0 {
                    // All-idle interval: split equally.
                    let share = residual / direct.len() as f64;
                    for (fid, d) in direct {
                        per_function.insert(fid, (d, share));
                    }
                } else {
                    for (fid, d) in direct {
                        let share = residual * (d / direct_sum);
                        per_function.insert(fid, (d, share));
                    }
                }
            }
        }
    }
    Ok(IntervalAttribution {
        per_function,
        operator_residual,
    })
}

/// Roll descendant energy up the RPC call graph (a forest of parent links).
///
/// `parents` maps child function id → parent function id. Each record's
/// `descendant_energy` becomes the sum over its children of their
/// (direct + idle_share + descendant). Fails listing the cycle if the links
/// are cyclic.
pub fn aggregate_provenance(
    records: &BTreeMap<String, ProvenanceRecord>,
    parents: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, ProvenanceRecord>> {
    // Detect cycles among the parent links first.
    let mut state: BTreeMap<&str, u8> = BTreeMap::new();
    for start in parents.keys() {
        if state.get(start.as_str()).copied() == Some(2) {
            continue;
        }
        let mut path: Vec<&str> = vec![start.as_str()];
        state.insert(start.as_str(), 1);
        while let Some(next) = parents.get(*path.last().unwrap()) {
            match state.get(next.as_str()).copied() {
                Some(2) => break,
                Some(1) => {
                    let pos = path.iter().position(|&n| n == next.as_str()).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        path[pos..].iter().map(|s| s.to_string()).collect();
                    cycle.push(next.clone());
                    return Err(SimError::CallGraphCycle { cycle });
                }
                _ => {
                    state.insert(next.as_str(), 1);
                    path.push(next.as_str());
                }
            }
        }
        for n in path {
            state.insert(n, 2);
        }
    }

    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (child, parent) in parents {
        children
            .entry(parent.as_str())
            .or_default()
            .push(child.as_str());
    }

    let mut out = records.clone();
    // Post-order accumulation: process ids by decreasing depth.
    let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
    for id in records.keys() {
        let mut d = 0;
        let mut cur = id.as_str();
        while let Some(p) = parents.get(cur) {
            d += 1;
            cur = p.as_str();
        }
        depth.insert(id.as_str(), d);
    }
    let mut order: Vec<&str> = records.keys().map(|s| s.as_str()).collect();
    order.sort_by_key(|id| std::cmp::Reverse(depth.get(id).copied().unwrap_or(0)));

    for id in order {
        let total: f64 = children
            .get(id)
            .map(|kids| {
                kids.iter()
                    .filter_map(|c| out.get(*c))
                    .map(|r| r.direct_energy + r.idle_share + r.descendant_energy)
                    .sum()
            })
            .unwrap_or(0.0);
        if let Some(rec) = out.get_mut(id) {
            rec.descendant_energy = total;
        }
    }
    Ok(out)
}

/// Convert energy to carbon at the grid intensity in effect at time `t`.
pub fn carbonize(energy_j: f64, series: &CarbonIntensitySeries, t: u64) -> Result<f64> {
    Ok(energy_j / JOULES_PER_KWH * intensity_at(series, t)?)
}

/// Write provenance records as CSV (`function_id, app_id, direct_j,
/// idle_share_j, descendant_j, carbon_g`), sorted by function id.
pub fn export_csv<W: Write>(records: &BTreeMap<String, ProvenanceRecord>, out: &mut W) -> Result<()> {
    writeln!(out, "function_id,app_id,direct_j,idle_share_j,descendant_j,carbon_g")?;
    for rec in records.values() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            rec.function_id,
            rec.app_id,
            crate::units::fmt_f64(rec.direct_energy),
            crate::units::fmt_f64(rec.idle_share),
            crate::units::fmt_f64(rec.descendant_energy),
            crate::units::fmt_f64(rec.carbon),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sample(fid: &str, features: &[(&str, f64)]) -> TelemetrySample {
        TelemetrySample {
            function_id: fid.to_string(),
            device_id: "cpu0".to_string(),
            features: features
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }

    fn model(coeffs: &[(&str, f64)], baseline: f64) -> AttributionModel {
        AttributionModel {
            coefficients: coeffs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            baseline,
        }
    }

    #[test]
    fn estimate_zero_features_returns_baseline() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.25);
        let s = sample("f1", &[("cpu_cycles", 0.0)]);
        assert_eq!(estimate_energy(&m, &s).unwrap(), 0.25);
    }

    #[test]
    fn estimate_dot_product() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.0);
        let s = sample("f1", &[("cpu_cycles", 1e9)]);
        assert_eq!(estimate_energy(&m, &s).unwrap(), 1.0);
    }

    #[test]
    fn estimate_unknown_feature_is_domain_error() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.0);
        let s = sample("f1", &[("quantum_flux", 3.0)]);
        assert!(estimate_energy(&m, &s).is_err());
    }

    #[test]
    fn estimate_matches_independent_recomputation() {
        let mut rng = crate::rng::substream(21, "estimate-oracle");
        for _ in 0..100 {
            let names: Vec<&str> = CANONICAL_FEATURES.to_vec();
            let coeffs: Vec<(&str, f64)> = names
                .iter()
                .map(|n| (*n, rng.random_range(0.0..1e-6)))
                .collect();
            let baseline = rng.random_range(0.0..1.0);
            let m = model(&coeffs, baseline);
            let feats: Vec<(&str, f64)> = names
                .iter()
                .map(|n| (*n, rng.random_range(0.0..1e9)))
                .collect();
            let s = sample("f", &feats);
            let expected: f64 = baseline
                + coeffs
                    .iter()
                    .zip(&feats)
                    .map(|((_, c), (_, v))| c * v)
                    .sum::<f64>();
            let got = estimate_energy(&m, &s).unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    fn synthesize(
        truth: &AttributionModel,
        n: usize,
        noise_rel: f64,
        seed: u64,
    ) -> Vec<(TelemetrySample, f64)> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::rng::substream(seed, "fit-synth");
        (0..n)
            .map(|i| {
                let feats: Vec<(String, f64)> = truth
                    .coefficients
                    .keys()
                    .map(|k| (k.clone(), rng.random_range(0.0..1e9)))
                    .collect();
                let s = TelemetrySample {
                    function_id: format!("f{i}"),
                    device_id: "d0".into(),
                    features: feats.into_iter().collect(),
                };
                let clean = estimate_energy(truth, &s).unwrap();
                let noise: f64 = StandardNormal.sample(&mut rng);
                (s, clean * (1.0 + noise_rel * noise))
            })
            .collect()
    }

    #[test]
    fn fit_recovers_noiseless_coefficients() {
        let truth = model(&[("cpu_cycles", 1e-9), ("storage_bytes_moved", 2e-8)], 0.5);
        let data = synthesize(&truth, 1000, 0.0, 77);
        let report = fit_model(&data).unwrap();
        for (name, c) in &truth.coefficients {
            let got = report.model.coefficients[name];
            assert!(
                (got - c).abs() <= 1e-6 * c.abs(),
                "{name}: {got} vs {c}"
            );
        }
        assert!((report.model.baseline - 0.5).abs() <= 1e-6 * 0.5);
    }

    #[test]
    fn fit_recovers_under_one_percent_noise() {
        let truth = model(&[("cpu_cycles", 1e-9), ("storage_bytes_moved", 2e-8)], 0.5);
        let data = synthesize(&truth, 1000, 0.01, 78);
        let report = fit_model(&data).unwrap();
        for (name, c) in &truth.coefficients {
            let got = report.model.coefficients[name];
            assert!(
                (got - c).abs() <= 0.05 * c.abs(),
                "{name}: {got} vs {c}"
            );
        }
    }

    #[test]
    fn fit_rejects_duplicate_columns() {
        let mut rng = crate::rng::substream(9, "collinear");
        let data: Vec<(TelemetrySample, f64)> = (0..50)
            .map(|i| {
                let v: f64 = rng.random_range(0.0..100.0);
                (
                    sample(&format!("f{i}"), &[("a", v), ("b", v)]),
                    3.0 * v + 1.0,
                )
            })
            .collect();
        match fit_model(&data) {
            Err(SimError::RankDeficient { column, .. }) => assert_eq!(column, "b"),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn fit_rejects_insufficient_samples() {
        let data = vec![(sample("f0", &[("a", 1.0)]), 1.0)];
        assert!(fit_model(&data).is_err());
    }

    #[test]
    fn fit_projects_negative_coefficients_to_zero() {
        // y depends only on 'a'; 'b' is pure noise pushed slightly negative.
        let mut rng = crate::rng::substream(12, "nnls");
        let data: Vec<(TelemetrySample, f64)> = (0..200)
            .map(|i| {
                let a: f64 = rng.random_range(0.0..100.0);
                let b: f64 = rng.random_range(0.0..100.0);
                // Construct a target anti-correlated with b.
                (sample(&format!("f{i}"), &[("a", a), ("b", b)]), 2.0 * a - 0.01 * b)
            })
            .collect();
        let report = fit_model(&data).unwrap();
        assert_eq!(report.model.coefficients["b"], 0.0);
        assert!(report.model.coefficients["a"] > 0.0);
    }

    #[test]
    fn fit_is_idempotent_on_own_predictions() {
        let truth = model(
            &[("cpu_cycles", 5e-10), ("network_bytes", 1e-8)],
            0.125,
        );
        let data = synthesize(&truth, 300, 0.02, 13);
        let first = fit_model(&data).unwrap();
        let refit_data: Vec<(TelemetrySample, f64)> = data
            .iter()
            .map(|(s, _)| (s.clone(), estimate_energy(&first.model, s).unwrap()))
            .collect();
        let second = fit_model(&refit_data).unwrap();
        for (name, c) in &first.model.coefficients {
            assert!(
                (second.model.coefficients[name] - c).abs() <= 1e-9 * c.abs().max(1e-12),
                "{name}"
            );
        }
        assert!((second.model.baseline - first.model.baseline).abs() <= 1e-9);
    }

    #[test]
    fn attribute_exact_estimate_leaves_no_idle() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.0);
        let s = sample("f1", &[("cpu_cycles", 1e9)]);
        let out =
            attribute_interval(&m, &[s], 1.0, IdleAttribution::Proportional).unwrap();
        assert_eq!(out.per_function["f1"], (1.0, 0.0));
        assert_eq!(out.operator_residual, 0.0);
    }

    #[test]
    fn attribute_splits_residual_symmetrically() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.0);
        let a = sample("f1", &[("cpu_cycles", 1e9)]);
        let b = sample("f2", &[("cpu_cycles", 1e9)]);
        let out =
            attribute_interval(&m, &[a, b], 4.0, IdleAttribution::Proportional).unwrap();
        assert_eq!(out.per_function["f1"], (1.0, 1.0));
        assert_eq!(out.per_function["f2"], (1.0, 1.0));
    }

    #[test]
    fn attribute_empty_interval_books_to_operator() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.0);
        let out = attribute_interval(&m, &[], 2.5, IdleAttribution::Proportional).unwrap();
        assert!(out.per_function.is_empty());
        assert_eq!(out.operator_residual, 2.5);
    }

    #[test]
    fn attribute_all_idle_interval_splits_equally() {
        let m = model(&[("cpu_cycles", 1e-9)], 0.0);
        let a = sample("f1", &[("cpu_cycles", 0.0)]);
        let b = sample("f2", &[("cpu_cycles", 0.0)]);
        let out =
            attribute_interval(&m, &[a, b], 3.0, IdleAttribution::Proportional).unwrap();
        assert_eq!(out.per_function["f1"], (0.0, 1.5));
        assert_eq!(out.per_function["f2"], (0.0, 1.5));
    }

    #[test]
    fn attribute_conserves_energy() {
        let mut rng = crate::rng::substream(31, "conservation");
        let m = model(&[("cpu_cycles", 1e-9), ("network_bytes", 1e-8)], 0.01);
        for mode in [
            IdleAttribution::Proportional,
            IdleAttribution::Equal,
            IdleAttribution::OperatorOnly,
        ] {
            for _ in 0..100 {
                let n = rng.random_range(0..10);
                let samples: Vec<TelemetrySample> = (0..n)
                    .map(|i| {
                        sample(
                            &format!("f{}", i % 4),
                            &[
                                ("cpu_cycles", rng.random_range(0.0..1e9)),
                                ("network_bytes", rng.random_range(0.0..1e7)),
                            ],
                        )
                    })
                    .collect();
                let measured = rng.random_range(0.0..100.0);
                let out = attribute_interval(&m, &samples, measured, mode).unwrap();
                let total: f64 = out
                    .per_function
                    .values()
                    .map(|(d, i)| d + i)
                    .sum::<f64>()
                    + out.operator_residual;
                assert!(
                    (total - measured).abs() <= 1e-9 * measured.max(1.0),
                    "{mode:?}: {total} vs {measured}"
                );
            }
        }
    }

    fn record(fid: &str, direct: f64, idle: f64) -> ProvenanceRecord {
        ProvenanceRecord {
            function_id: fid.to_string(),
            app_id: "A1".to_string(),
            direct_energy: direct,
            idle_share: idle,
            descendant_energy: 0.0,
            carbon: 0.0,
        }
    }

    #[test]
    fn aggregate_leaf_has_zero_descendant() {
        let records = BTreeMap::from([("a".to_string(), record("a", 1.0, 0.0))]);
        let out = aggregate_provenance(&records, &BTreeMap::new()).unwrap();
        assert_eq!(out["a"].descendant_energy, 0.0);
    }

    #[test]
    fn aggregate_chain_sums_descendants() {
        let records = BTreeMap::from([
            ("a".to_string(), record("a", 1.0, 0.0)),
            ("b".to_string(), record("b", 2.0, 0.0)),
            ("c".to_string(), record("c", 3.0, 0.0)),
        ]);
        let parents = BTreeMap::from([
            ("b".to_string(), "a".to_string()),
            ("c".to_string(), "b".to_string()),
        ]);
        let out = aggregate_provenance(&records, &parents).unwrap();
        assert_eq!(out["a"].descendant_energy, 5.0);
        assert_eq!(out["b"].descendant_energy, 3.0);
        assert_eq!(out["c"].descendant_energy, 0.0);
    }

    #[test]
    fn aggregate_detects_cycles() {
        let records = BTreeMap::from([
            ("a".to_string(), record("a", 1.0, 0.0)),
            ("b".to_string(), record("b", 2.0, 0.0)),
        ]);
        let parents = BTreeMap::from([
            ("a".to_string(), "b".to_string()),
            ("b".to_string(), "a".to_string()),
        ]);
        match aggregate_provenance(&records, &parents) {
            Err(SimError::CallGraphCycle { cycle }) => assert!(cycle.len() >= 2),
            other => panic!("expected cycle error, got {other:?}"),
        }
    }

    #[test]
    fn aggregate_matches_exhaustive_descendant_sum() {
        let mut rng = crate::rng::substream(41, "aggregate-oracle");
        for _ in 0..50 {
            let n = rng.random_range(1..30usize);
            let mut records = BTreeMap::new();
            let mut parents = BTreeMap::new();
            for i in 0..n {
                let fid = format!("f{i}");
                records.insert(
                    fid.clone(),
                    record(&fid, rng.random_range(0.0..10.0), rng.random_range(0.0..1.0)),
                );
                if i > 0 && rng.random::<f64>() < 0.7 {
                    // Parent with smaller index keeps links acyclic.
                    parents.insert(fid, format!("f{}", rng.random_range(0..i)));
                }
            }
            let out = aggregate_provenance(&records, &parents).unwrap();

            // Oracle: descendant set by transitive-closure walk per node.
            for (fid, rec) in &out {
                let mut expected = 0.0;
                for other in records.keys() {
                    if other == fid {
                        continue;
                    }
                    let mut cur = other.clone();
                    let mut is_descendant = false;
                    while let Some(p) = parents.get(&cur) {
                        if p == fid {
                            is_descendant = true;
                            break;
                        }
                        cur = p.clone();
                    }
                    if is_descendant {
                        let r = &records[other];
                        expected += r.direct_energy + r.idle_share;
                    }
                }
                assert!(
                    (rec.descendant_energy - expected).abs()
                        <= 1e-9 * expected.max(1.0),
                    "{fid}: {} vs {expected}",
                    rec.descendant_energy
                );
            }
        }
    }

    #[test]
    fn aggregate_scaling_is_linear() {
        let mut rng = crate::rng::substream(43, "aggregate-linear");
        let n = 20usize;
        let mut records = BTreeMap::new();
        let mut parents = BTreeMap::new();
        for i in 0..n {
            let fid = format!("f{i}");
            records.insert(
                fid.clone(),
                record(&fid, rng.random_range(0.0..10.0), rng.random_range(0.0..1.0)),
            );
            if i > 0 {
                parents.insert(fid, format!("f{}", rng.random_range(0..i)));
            }
        }
        let lambda = 3.5;
        let scaled: BTreeMap<String, ProvenanceRecord> = records
            .iter()
            .map(|(k, r)| {
                let mut r2 = r.clone();
                r2.direct_energy *= lambda;
                r2.idle_share *= lambda;
                (k.clone(), r2)
            })
            .collect();
        let base = aggregate_provenance(&records, &parents).unwrap();
        let scaled_out = aggregate_provenance(&scaled, &parents).unwrap();
        for (fid, rec) in &base {
            let got = scaled_out[fid].descendant_energy;
            let expected = rec.descendant_energy * lambda;
            assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn carbonize_unit_conversion() {
        let series = CarbonIntensitySeries::constant(500.0);
        assert_eq!(carbonize(3.6e6, &series, 0).unwrap(), 500.0);
        assert_eq!(carbonize(0.0, &series, 0).unwrap(), 0.0);
    }

    #[test]
    fn carbonize_matches_independent_recomputation() {
        let mut rng = crate::rng::substream(51, "carbonize-oracle");
        for _ in 0..100 {
            let intensity = rng.random_range(0.0..1000.0);
            let energy = rng.random_range(0.0..1e7);
            let series = CarbonIntensitySeries::constant(intensity);
            let got = carbonize(energy, &series, 123).unwrap();
            let expected = energy / 3.6e6 * intensity;
            assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn estimates_monotone_in_features() {
        let m = model(&[("a", 1e-3), ("b", 2e-3)], 0.1);
        let lo = sample("f", &[("a", 1.0), ("b", 1.0)]);
        let hi = sample("f", &[("a", 2.0), ("b", 1.0)]);
        assert!(estimate_energy(&m, &hi).unwrap() >= estimate_energy(&m, &lo).unwrap());
    }
}
