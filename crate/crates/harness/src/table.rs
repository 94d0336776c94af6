use std::io::Write;

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::report::Summary;

#[derive(Serialize)]
struct Row<'a> {
    algorithm: &'a str,
    alpha: f64,
    eps: f64,
    /// Mean normalized error; empty when no trial produced one.
    observed_error: Option<f64>,
    max_counter_bits: u32,
    samples_stored: u64,
}

/// One CSV row per summary, in the order given.
pub fn emit_tradeoff_table<W: Write>(summaries: &[Summary], w: W) -> Result<()> {
    if summaries.is_empty() {
        return Err(HarnessError::NoReports);
    }
    let mut out = csv::Writer::from_writer(w);
    for s in summaries {
        out.serialize(Row {
            algorithm: &s.algorithm,
            alpha: s.alpha,
            eps: s.eps,
            observed_error: s.mean_error,
            max_counter_bits: s.max_counter_bits,
            samples_stored: s.max_samples_stored,
        })?;
    }
    out.flush().map_err(|e| HarnessError::io("table", e))
}
