//! Temporal scheduling: fixed-length windows and slack-based admission.
//!
//! Time is divided into fixed-length windows. At each boundary, pending
//! functions with little slack are admitted to the current window's
//! placement round and the rest are pushed into future windows; deferral
//! never crosses a function's latest feasible start (computed with the best
//! device duration, an optimistic estimate). When carbon-aware deferral is
//! on, slack is spent waiting for the greenest reachable window instead of
//! simply the latest feasible one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::hardware::{intensity_at, CarbonIntensitySeries};
use crate::workload::{slack, MicroFunction};

/// Default scheduling window length, µs.
pub const DEFAULT_WINDOW_US: u64 = 1_000;

/// One scheduling window and the admission decisions made at its start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleWindow {
    pub index: u64,
    pub start: u64,
    pub end: u64,
    pub admitted: BTreeSet<String>,
    pub deferred: BTreeSet<String>,
}

impl ScheduleWindow {
    pub fn new(index: u64, start: u64, length: u64) -> Self {
        ScheduleWindow {
            index,
            start,
            end: start + length,
            admitted: BTreeSet::new(),
            deferred: BTreeSet::new(),
        }
    }

    pub fn length(&self) -> u64 {
        self.end - self.start
    }
}

/// Admission decisions for one window.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partition {
    /// Indices (into the pending slice) admitted to this window.
    pub admit: Vec<usize>,
    /// Indices deferred to a future window.
    pub defer: Vec<usize>,
    /// Admitted indices that were already infeasible on arrival
    /// (negative slack): reported as violations, still run best-effort.
    pub late: Vec<usize>,
}

/// Split pending functions into this window's admissions and deferrals.
///
/// A function with slack below the window length is admitted (deferring it
/// one window would leave negative slack); slack at or above one window
/// defers. With `carbon_lookahead`, a function defers only while a strictly
/// greener window is reachable within its slack; otherwise it is admitted
/// now. Functions whose best duration is unknown (no compatible device) are
/// admitted so the placement solver can report them.
pub fn partition(
    pending: &[&MicroFunction],
    window_start: u64,
    window_length: u64,
    best_duration: &dyn Fn(&MicroFunction) -> Option<u64>,
    carbon_lookahead: Option<&CarbonIntensitySeries>,
) -> Partition {
    let mut out = Partition::default();
    for (i, f) in pending.iter().enumerate() {
        let Some(dur) = best_duration(f) else {
            out.admit.push(i);
            continue;
        };
        let s = slack(f, window_start, dur);
        if s < 0 {
            out.admit.push(i);
            out.late.push(i);
        } else if (s as u64) < window_length {
            out.admit.push(i);
        } else if let Some(series) = carbon_lookahead {
            if greener_window_reachable(series, window_start, s as u64) {
                out.defer.push(i);
            } else {
                out.admit.push(i);
            }
        } else {
            out.defer.push(i);
        }
    }
    out
}

/// Whether the intensity series drops strictly below its current level
/// anywhere within `(now, now + slack]`.
fn greener_window_reachable(series: &CarbonIntensitySeries, now: u64, slack_us: u64) -> bool {
    let Ok(current) = intensity_at(series, now) else {
        return false;
    };
    let reachable_end = now.saturating_add(slack_us);
    series
        .samples
        .iter()
        .filter(|(t, _)| *t > now && *t <= reachable_end)
        .any(|(_, v)| *v < current)
}

/// Latest instant the function can still start and meet its deadline on its
/// best device.
pub fn latest_feasible_start(f: &MicroFunction, best_duration: u64) -> i64 {
    f.deadline_abs() as i64 - best_duration as i64
}
