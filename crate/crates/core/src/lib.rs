//! Deterministic discrete-event simulation and optimization library for
//! energy- and carbon-aware scheduling of fine-grained datacenter functions.
//!
//! The library models heterogeneous, energy-proportional compute devices and
//! storage media, schedules microsecond-scale functions ("μfunctions") onto
//! them under per-function SLAs, attributes lifecycle energy back to each
//! function through a provenance ledger, and converts energy to carbon using
//! a time-varying grid intensity series.
//!
//! Layering, bottom up:
//!
//! * [`hardware`] — device/medium power models, carbon intensity series,
//!   embodied-carbon amortization, and the catalog file format.
//! * [`workload`] — μfunctions, SLAs, data objects, the seeded trace
//!   generator and the JSON-lines trace format.
//! * [`provenance`] — linear energy-attribution model, least-squares fitting,
//!   interval ledger closing, and RPC call-graph aggregation.
//! * [`placement`] — the per-window assignment optimizer: exact
//!   branch-and-bound, memoized greedy heuristic, fractional lower bound.
//! * [`interchange`] — Pareto frontier extraction, hybrid CPU+FPGA load
//!   splitting, and SLA-constrained memory tiering.
//! * [`scheduler`] — fixed-length scheduling windows and slack-based
//!   admission/deferral.
//! * [`engine`] — the deterministic event loop tying everything together,
//!   policy comparison, and metrics export.

pub mod engine;
pub mod error;
pub mod hardware;
pub mod interchange;
pub mod placement;
pub mod provenance;
pub mod rng;
pub mod scheduler;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod units;
pub mod workload;

pub use error::SimError;
