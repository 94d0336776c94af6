//! JSON-lines reports: one `spec` line, one `trial` line per trial and a
//! closing `summary` line, each tagged by `kind`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::spec::{ExperimentSpec, SCHEMA_VERSION};
use crate::trial::TrialReport;

/// Aggregate over all trials of an experiment.
///
/// Optional fields are still required on read, so a truncated summary is a
/// schema error rather than a silent `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub algorithm: String,
    pub alpha: f64,
    pub eps: f64,
    pub trials: u64,
    pub passes: u64,
    #[serde(deserialize_with = "Option::deserialize")]
    pub pass_fraction: Option<f64>,
    #[serde(deserialize_with = "Option::deserialize")]
    pub mean_error: Option<f64>,
    #[serde(deserialize_with = "Option::deserialize")]
    pub p50_error: Option<f64>,
    #[serde(deserialize_with = "Option::deserialize")]
    pub p90_error: Option<f64>,
    #[serde(deserialize_with = "Option::deserialize")]
    pub max_error: Option<f64>,
    pub max_counter_bits: u32,
    pub max_samples_stored: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Nearest-rank percentile of sorted, nonempty `xs`.
fn percentile(xs: &[f64], q: f64) -> f64 {
    let rank = ((q * xs.len() as f64).ceil() as usize).clamp(1, xs.len());
    xs[rank - 1]
}

impl Summary {
    pub fn from_trials(spec: &ExperimentSpec, trials: &[TrialReport]) -> Self {
        let passes = trials.iter().filter(|t| t.pass).count() as u64;
        let mut errs: Vec<f64> = trials.iter().filter_map(|t| t.error).collect();
        errs.sort_by(f64::total_cmp);
        let stat = |f: &dyn Fn(&[f64]) -> f64| (!errs.is_empty()).then(|| f(&errs));
        Self {
            schema: SCHEMA_VERSION,
            algorithm: spec.algorithm.id().to_owned(),
            alpha: spec.algorithm.alpha(),
            eps: spec.algorithm.eps(),
            trials: trials.len() as u64,
            passes,
            pass_fraction: (!trials.is_empty()).then(|| passes as f64 / trials.len() as f64),
            mean_error: stat(&|e| e.iter().sum::<f64>() / e.len() as f64),
            p50_error: stat(&|e| percentile(e, 0.5)),
            p90_error: stat(&|e| percentile(e, 0.9)),
            max_error: stat(&|e| e[e.len() - 1]),
            max_counter_bits: trials.iter().map(|t| t.counter_bits).max().unwrap_or(0),
            max_samples_stored: trials.iter().map(|t| t.samples_stored).max().unwrap_or(0),
            wall_ms: spec
                .timing
                .then(|| trials.iter().filter_map(|t| t.wall_ms).sum()),
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Line<'a> {
    Spec(&'a ExperimentSpec),
    Trial(&'a TrialReport),
    Summary(&'a Summary),
}

/// A finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub trials: Vec<TrialReport>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = |l: Line<'_>| -> Result<()> {
            serde_json::to_writer(&mut w, &l)?;
            w.write_all(b"\n")
                .map_err(|e| HarnessError::io("report", e))
        };
        line(Line::Spec(&self.spec))?;
        for t in &self.trials {
            line(Line::Trial(t))?;
        }
        line(Line::Summary(&self.summary))?;
        w.flush().map_err(|e| HarnessError::io("report", e))
    }
}

/// The summary line of a report file.
pub fn read_summary(path: &Path) -> Result<Summary> {
    let shown = path.display().to_string();
    let schema = |reason: String| HarnessError::Schema {
        path: shown.clone(),
        reason,
    };
    let f = File::open(path).map_err(|e| HarnessError::io(path.display(), e))?;
    let mut found = None;
    for (no, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path.display(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(&line).map_err(|e| schema(format!("line {}: {e}", no + 1)))?;
        if v.get("kind").and_then(Value::as_str) == Some("summary") {
            found = Some((no + 1, v));
        }
    }
    let (no, v) = found.ok_or_else(|| schema("no summary line".into()))?;
    let s: Summary = serde_json::from_value(v).map_err(|e| schema(format!("line {no}: {e}")))?;
    if s.schema != SCHEMA_VERSION {
        return Err(schema(format!(
            "schema {} is not {SCHEMA_VERSION}",
            s.schema
        )));
    }
    Ok(s)
}
