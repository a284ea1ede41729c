//! Hardware resource models: compute devices, storage media, power draw under
//! load, grid carbon intensity over time, and embodied-carbon amortization.
//!
//! Power follows a linear energy-proportionality curve anchored at an idle
//! fraction of peak (default 0.5: an idle server draws about half of its
//! full-load power). All types are immutable after construction and safe to
//! share across concurrent simulation runs.

mod catalog;

pub use catalog::{Catalog, ObjectEntry};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::units::{us_to_sec, JOULES_PER_KWH};

/// Idle power as a fraction of peak when the catalog does not say otherwise.
pub const DEFAULT_IDLE_FRACTION: f64 = 0.5;

/// Broad class of a compute device; speedups are profiled per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    CPU,
    GPU,
    FPGA,
    OTHER,
}

impl DeviceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceKind::CPU => "CPU",
            DeviceKind::GPU => "GPU",
            DeviceKind::FPGA => "FPGA",
            DeviceKind::OTHER => "OTHER",
        }
    }
}

/// A compute device with an energy-proportional power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeDevice {
    pub id: String,
    pub kind: DeviceKind,
    /// Full-load power draw, watts.
    pub peak_power: f64,
    /// Idle power as a fraction of peak, in [0, 1].
    #[serde(default = "default_idle_fraction")]
    pub idle_fraction: f64,
    /// Throughput in work-units per second at speedup 1.
    pub capacity: f64,
    /// Reconfiguration latency for FPGAs, cold-start latency otherwise (µs).
    #[serde(default)]
    pub startup_latency: u64,
    /// Energy spent on a startup/reconfiguration event, joules.
    #[serde(default)]
    pub startup_energy: f64,
    /// Amortized manufacturing carbon, grams CO2e per second of existence.
    #[serde(default)]
    pub embodied_rate: f64,
}

fn default_idle_fraction() -> f64 {
    DEFAULT_IDLE_FRACTION
}

impl ComputeDevice {
    /// Check the type invariants, returning every violation.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.peak_power > 0.0) {
            errs.push(format!("device '{}': peak_power must be > 0", self.id));
        }
        if !(self.capacity > 0.0) {
            errs.push(format!("device '{}': capacity must be > 0", self.id));
        }
        if !(0.0..=1.0).contains(&self.idle_fraction) {
            errs.push(format!(
                "device '{}': idle_fraction must be in [0, 1]",
                self.id
            ));
        }
        if self.startup_energy < 0.0 {
            errs.push(format!("device '{}': startup_energy must be >= 0", self.id));
        }
        if self.embodied_rate < 0.0 {
            errs.push(format!("device '{}': embodied_rate must be >= 0", self.id));
        }
        errs
    }

    /// Power at zero utilization, watts.
    pub fn idle_power(&self) -> f64 {
        self.idle_fraction * self.peak_power
    }

    /// Marginal power of fully loading the device over leaving it idle, watts.
    pub fn active_power_span(&self) -> f64 {
        (1.0 - self.idle_fraction) * self.peak_power
    }
}

/// Storage tier; each offers a different energy/latency operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StorageTier {
    DRAM,
    NVM,
    SSD,
    HDD,
}

impl StorageTier {
    pub fn as_str(&self) -> &'static str {
        match self {
            StorageTier::DRAM => "DRAM",
            StorageTier::NVM => "NVM",
            StorageTier::SSD => "SSD",
            StorageTier::HDD => "HDD",
        }
    }
}

/// A storage medium in the disaggregated pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageMedium {
    pub id: String,
    pub tier: StorageTier,
    /// Capacity in bytes.
    pub capacity: u64,
    /// Watts per byte/second of achieved transfer bandwidth.
    pub active_power_per_bw: f64,
    /// Watts per byte stored (resident), independent of activity.
    pub idle_power_per_byte: f64,
    /// Median access latency, µs.
    pub access_latency_p50: u64,
    /// Access latency at the configured tail percentile, µs.
    pub access_latency_tail: u64,
    /// Transfer bandwidth, bytes per second.
    pub bandwidth: f64,
    /// Extra latency per access across the disaggregation fabric, µs.
    /// Media co-located with compute carry 0 here.
    #[serde(default)]
    pub remote_access_penalty: u64,
}

impl StorageMedium {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.capacity == 0 {
            errs.push(format!("medium '{}': capacity must be > 0", self.id));
        }
        if self.access_latency_tail < self.access_latency_p50 {
            errs.push(format!(
                "medium '{}': access_latency_tail must be >= access_latency_p50",
                self.id
            ));
        }
        if !(self.bandwidth > 0.0) {
            errs.push(format!("medium '{}': bandwidth must be > 0", self.id));
        }
        if self.active_power_per_bw < 0.0 {
            errs.push(format!(
                "medium '{}': active_power_per_bw must be >= 0",
                self.id
            ));
        }
        if self.idle_power_per_byte < 0.0 {
            errs.push(format!(
                "medium '{}': idle_power_per_byte must be >= 0",
                self.id
            ));
        }
        errs
    }

    /// Energy to move `bytes` through this medium, joules.
    ///
    /// `active_power_per_bw` (W per byte/s) times transfer time at full
    /// bandwidth collapses to watts·s = J independent of the bandwidth.
    pub fn transfer_energy(&self, bytes: u64) -> f64 {
        self.active_power_per_bw * bytes as f64
    }

    /// Time to move `bytes` plus the per-access latency terms, µs.
    pub fn access_time(&self, bytes: u64) -> u64 {
        let transfer = (bytes as f64 / self.bandwidth * 1e6).ceil() as u64;
        transfer + self.access_latency_tail + self.remote_access_penalty
    }
}

/// Step-function grid carbon intensity over time.
///
/// Lookups between samples hold the last sample ("last value holds").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensitySeries {
    /// (timestamp µs, grams CO2e per kWh), timestamps strictly increasing.
    pub samples: Vec<(u64, f64)>,
}

impl CarbonIntensitySeries {
    pub fn new(samples: Vec<(u64, f64)>) -> Result<Self> {
        let series = CarbonIntensitySeries { samples };
        let errs = series.validate();
        if errs.is_empty() {
            Ok(series)
        } else {
            Err(SimError::Validation(errs.join("; ")))
        }
    }

    /// A flat series: one sample at t=0.
    pub fn constant(intensity: f64) -> Self {
        CarbonIntensitySeries {
            samples: vec![(0, intensity)],
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.samples.is_empty() {
            errs.push("intensity series must be non-empty".to_string());
        }
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                errs.push(format!(
                    "intensity timestamps must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                ));
            }
        }
        for (t, v) in &self.samples {
            if *v < 0.0 || !v.is_finite() {
                errs.push(format!("intensity at t={t} must be finite and >= 0"));
            }
        }
        errs
    }
}

/// Instantaneous power draw at the given utilization, watts.
///
/// Linear between the idle anchor and peak: the simplest monotone curve
/// consistent with idle draw being a fixed fraction of full load.
pub fn power_draw(device: &ComputeDevice, utilization: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(SimError::Domain(format!(
            "utilization {utilization} outside [0, 1]"
        )));
    }
    if utilization == 1.0 {
        // Exact at the endpoint: the additive form can miss peak by an ulp.
        return Ok(device.peak_power);
    }
    let p = device.idle_power() + device.active_power_span() * utilization;
    Ok(p.clamp(device.idle_power(), device.peak_power))
}

/// Energy over a piecewise-constant utilization profile, joules.
pub fn energy_over(device: &ComputeDevice, segments: &[(u64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for &(duration_us, utilization) in segments {
        total += power_draw(device, utilization)? * us_to_sec(duration_us);
    }
    Ok(total)
}

/// Step-function intensity lookup: value of the latest sample at or before `t`.
pub fn intensity_at(series: &CarbonIntensitySeries, t: u64) -> Result<f64> {
    let first = series
        .samples
        .first()
        .ok_or_else(|| SimError::Domain("intensity series is empty".to_string()))?;
    if t < first.0 {
        return Err(SimError::Domain(format!(
            "t={t} precedes first intensity sample at {}",
            first.0
        )));
    }
    let idx = series.samples.partition_point(|&(ts, _)| ts <= t);
    Ok(series.samples[idx - 1].1)
}

/// Embodied (manufacturing) carbon amortized over `duration`, grams CO2e.
///
/// Independent of utilization: the manufacturing carbon is sunk and accrues
/// with wall-clock existence, not with load.
pub fn embodied_carbon(device: &ComputeDevice, duration_us: u64) -> f64 {
    device.embodied_rate * us_to_sec(duration_us)
}

/// Solve for the embodied rate that makes embodied carbon a given share of
/// total lifecycle carbon at a reference utilization and grid intensity.
///
/// With operational carbon accruing at `power_draw(u_ref) · intensity`
/// per unit time, a share s needs `embodied = op · s / (1 - s)`.
pub fn embodied_rate_for_share(
    device: &ComputeDevice,
    share: f64,
    reference_utilization: f64,
    reference_intensity: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&share) {
        return Err(SimError::Domain(format!("share {share} outside [0, 1)")));
    }
    let op_watts = power_draw(device, reference_utilization)?;
    let op_grams_per_sec = op_watts * reference_intensity / JOULES_PER_KWH;
    Ok(op_grams_per_sec * share / (1.0 - share))
}
