//! JSON-lines trace format: one μfunction per line.
//!
//! Field names on the wire: `id`, `app_id`, `arrival_us`, `work`, `speedup`
//! (kind → multiplier), `reads`/`writes` (arrays of `{object_id, bytes}`),
//! `sla {deadline_us, percentile, carbon_budget_g?}`, `energy_budget_j?`,
//! `parent?`. Parsing and serialization round-trip exactly.

use std::io::{BufRead, Write};

use super::{validate_trace, MicroFunction};
use crate::error::{Result, SimError};

/// Serialize a trace to JSON lines.
pub fn serialize_trace<W: Write>(trace: &[MicroFunction], out: &mut W) -> Result<()> {
    for f in trace {
        let line = serde_json::to_string(f).map_err(|e| SimError::Io(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parse a JSON-lines trace, validating invariants and arrival ordering.
///
/// Malformed lines fail with their 1-based line number; blank lines are
/// permitted and skipped.
pub fn parse_trace<R: BufRead>(input: R) -> Result<Vec<MicroFunction>> {
    let mut trace = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| SimError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let f: MicroFunction = serde_json::from_str(&line).map_err(|e| SimError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let errs = f.validate();
        if !errs.is_empty() {
            return Err(SimError::Parse {
                line: lineno,
                message: errs.join("; "),
            });
        }
        trace.push(f);
    }
    let errs = validate_trace(&trace);
    if !errs.is_empty() {
        return Err(SimError::Validation(errs.join("; ")));
    }
    Ok(trace)
}

/// Parse a trace from a file path.
pub fn parse_trace_file(path: &std::path::Path) -> Result<Vec<MicroFunction>> {
    let file = std::fs::File::open(path)
        .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(std::io::BufReader::new(file))
}
