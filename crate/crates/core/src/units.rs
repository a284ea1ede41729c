//! Unit conventions and conversions.
//!
//! Time is carried as integer microseconds (`u64`), energy as joules (`f64`),
//! power as watts, carbon as grams CO2e, and grid intensity as grams per kWh.

/// Microseconds per second.
pub const US_PER_SEC: u64 = 1_000_000;

/// Joules per kilowatt-hour.
pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Convert integer microseconds to seconds.
#[inline]
pub fn us_to_sec(us: u64) -> f64 {
    us as f64 / US_PER_SEC as f64
}

/// Convert (fractional) seconds to microseconds, rounding to nearest.
#[inline]
pub fn sec_to_us(sec: f64) -> u64 {
    (sec * US_PER_SEC as f64).round() as u64
}

/// Format a float with 17 significant digits, enough to round-trip any f64.
///
/// Used by all exported result files so reproducibility checks can diff
/// outputs byte for byte.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // Avoid "-0" leaking into exports.
        return "0e0".to_string();
    }
    format!("{:.16e}", x)
}
