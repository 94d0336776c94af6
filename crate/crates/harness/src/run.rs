use std::fs::File;
use std::io::BufWriter;

use rayon::prelude::{IntoParallelIterator, ParallelIterator};
use rayon::ThreadPoolBuilder;

use crate::error::{HarnessError, Result};
use crate::report::{ExperimentReport, Summary};
use crate::spec::{ExperimentSpec, StreamSource};
use crate::trial::{run_trial, TrialReport};

/// Environment variable capping the trial worker pool.
pub const THREADS_ENV: &str = "DELTASKETCH_THREADS";

fn pool_size() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::InvalidSpec(format!(
                "{THREADS_ENV}=`{v}` is not a positive integer"
            ))),
        },
    }
}

/// Runs every trial and, when `spec.output` is set, writes the report there.
///
/// Trials run in a worker pool but are collected in trial order, so the
/// report depends only on the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut builder = ThreadPoolBuilder::new();
    if let Some(n) = pool_size()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    // A file stream is shared by every trial; read it once.
    let fixed = match &spec.stream {
        StreamSource::File { .. } if spec.trials > 0 => Some(spec.stream.materialize(0)?),
        _ => None,
    };
    let trials: Vec<TrialReport> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| match &fixed {
                Some(s) => run_trial(spec, t, s),
                None => run_trial(spec, t, &spec.stream.materialize(t)?),
            })
            .collect::<Result<_>>()
    })?;

    let summary = Summary::from_trials(spec, &trials);
    let report = ExperimentReport {
        spec: spec.clone(),
        trials,
        summary,
    };
    if let Some(path) = &spec.output {
        let f = File::create(path).map_err(|e| HarnessError::io(path.display(), e))?;
        report.write_jsonl(BufWriter::new(f))?;
    }
    Ok(report)
}
