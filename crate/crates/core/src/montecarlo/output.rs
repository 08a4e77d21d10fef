//! Artifact writers.
//!
//! Samples CSV: one comment line `# truncsa delta samples schema_version=1`,
//! then a header `replicate,checkpoint,coord_0,…,coord_{d-1}` and one row per
//! non-diverged replicate and checkpoint, in replicate order. Floats use the
//! shortest round-trip representation.
//!
//! Summary JSON: [`super::EnsembleSummary`] pretty-printed with a trailing
//! newline; non-finite numbers become `null`.

use std::io::{self, Write};

use super::{EnsembleRun, EnsembleSummary};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER_PREFIX: &str = "# truncsa delta samples schema_version=";

pub fn write_samples_csv<W: Write>(run: &EnsembleRun, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER_PREFIX}{SCHEMA_VERSION}")?;
    let d = run.summary.dim;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate".to_string(), "checkpoint".to_string()];
    header.extend((0..d).map(|i| format!("coord_{i}")));
    w.write_record(&header)?;
    for rec in run.records.iter().filter(|r| r.diverged_at.is_none()) {
        for (n, delta) in run.checkpoints.iter().zip(&rec.deltas) {
            let mut row = vec![rec.replicate.to_string(), n.to_string()];
            row.extend(delta.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()
}

pub fn write_summary_json<W: Write>(summary: &EnsembleSummary, mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out)
}
