//! CSV and plain-text renderings of harness results.
//!
//! CSV files start with `# key: value` lines echoing the seeds and settings
//! that produced them, followed by a header row named after the result
//! fields.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use super::latency::{Equivalence, LatencyReport};
use super::sweep::SweepResult;
use super::HarnessError;

fn write_csv<W: Write, T: Serialize>(
    mut out: W,
    meta: &[(&str, String)],
    rows: &[T],
) -> Result<(), HarnessError> {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(
    out: W,
    meta: &[(&str, String)],
    rows: &[SweepResult],
) -> Result<(), HarnessError> {
    write_csv(out, meta, rows)
}

pub fn write_latency_csv<W: Write>(
    out: W,
    meta: &[(&str, String)],
    rows: &[LatencyReport],
) -> Result<(), HarnessError> {
    write_csv(out, meta, rows)
}

pub fn sweep_table(rows: &[SweepResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>3} {:>4} {:>6} {:>6} {:>6} {:>6} {:>8} {:>9} {:>8}",
        "scheme", "tol", "tau", "TP", "FN", "FP", "TN", "recall", "precision", "FPR"
    );
    for r in rows {
        let precision = r
            .precision
            .map_or_else(|| "-".to_string(), |p| format!("{p:.5}"));
        let _ = writeln!(
            s,
            "{:<14} {:>3} {:>4} {:>6} {:>6} {:>6} {:>6} {:>8.5} {:>9} {:>8.5}",
            r.scheme.as_str(),
            r.flip_tolerance,
            r.tau,
            r.tp,
            r.fn_,
            r.fp,
            r.tn,
            r.recall,
            precision,
            r.fpr
        );
    }
    s
}

pub fn latency_table(rows: &[LatencyReport], eq: &[Equivalence]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<13} {:>9} {:>7} {:>10} {:>10} {:>12}",
        "structure", "size", "queries", "avg ms", "p95 ms", "candidates"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<13} {:>9} {:>7} {:>10.4} {:>10.4} {:>12.1}",
            r.structure.as_str(),
            r.registry_size,
            r.query_count,
            r.avg_ms,
            r.p95_ms,
            r.mean_candidates
        );
    }
    for e in eq {
        let _ = writeln!(
            s,
            "size {}: {} of {} queries had their nearest entry outside the bucket scope \
             ({} answered differently); {} mismatches",
            e.registry_size, e.out_of_scope, e.queries, e.out_of_scope_misses, e.mismatches
        );
    }
    s
}
