//! Experiment driver for the deltasketch sketches: generates or loads
//! streams, runs trials against the exact oracle and writes JSON-lines
//! reports and CSV trade-off tables.

pub mod error;
pub mod report;
pub mod run;
pub mod spec;
pub mod table;
pub mod trial;

pub use error::{HarnessError, Result};
pub use report::{read_summary, ExperimentReport, Summary};
pub use run::{run_experiment, THREADS_ENV};
pub use spec::{AlgorithmSpec, ExperimentSpec, L1Mode, StreamSource, TrialStream, SCHEMA_VERSION};
pub use table::emit_tradeoff_table;
pub use trial::{run_trial, TrialReport};
