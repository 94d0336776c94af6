//! Serializable experiment descriptions.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use deltasketch::hashing::derive_seed;
use deltasketch::heavy_hitters::HhMode;
use deltasketch::stream::{
    generate_stream, plant_stream, read_stream, GenSpec, PlantedItem, StreamConfig, Update,
};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Version of the spec and report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Which L1 estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L1Mode {
    Strict,
    General,
}

impl std::str::FromStr for L1Mode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Self::Strict),
            "general" => Ok(Self::General),
            other => Err(HarnessError::InvalidSpec(format!(
                "unknown l1 mode `{other}`"
            ))),
        }
    }
}

/// Algorithm and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum AlgorithmSpec {
    Hh {
        eps: f64,
        alpha: f64,
        mode: Option<HhMode>,
    },
    Csss {
        k: usize,
        eps: f64,
        alpha: f64,
    },
    Ip {
        eps: f64,
        alpha: f64,
        /// Overrides the interval base `s`.
        base: Option<u64>,
        /// The stream `g`; the experiment stream is `f`.
        second: StreamSource,
    },
    L1Sample {
        eps: f64,
        alpha: f64,
        delta: f64,
    },
    L1Est {
        eps: f64,
        alpha: f64,
        delta: f64,
        mode: L1Mode,
        /// Overrides the strict estimator's level base `s`.
        base: Option<u64>,
    },
    L0Est {
        eps: f64,
        alpha: f64,
        /// Overrides the bins-per-row constant.
        c_k: Option<f64>,
    },
    SuppSample {
        k: usize,
        delta: f64,
        alpha: f64,
    },
}

impl AlgorithmSpec {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Hh { .. } => "hh",
            Self::Csss { .. } => "csss",
            Self::Ip { .. } => "ip",
            Self::L1Sample { .. } => "l1sample",
            Self::L1Est {
                mode: L1Mode::Strict,
                ..
            } => "l1est-strict",
            Self::L1Est {
                mode: L1Mode::General,
                ..
            } => "l1est-general",
            Self::L0Est { .. } => "l0est",
            Self::SuppSample { .. } => "suppsample",
        }
    }

    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Hh { alpha, .. }
            | Self::Csss { alpha, .. }
            | Self::Ip { alpha, .. }
            | Self::L1Sample { alpha, .. }
            | Self::L1Est { alpha, .. }
            | Self::L0Est { alpha, .. }
            | Self::SuppSample { alpha, .. } => alpha,
        }
    }

    /// Accuracy parameter; the support sampler's fixed internal accuracy.
    pub fn eps(&self) -> f64 {
        match *self {
            Self::Hh { eps, .. }
            | Self::Csss { eps, .. }
            | Self::Ip { eps, .. }
            | Self::L1Sample { eps, .. }
            | Self::L1Est { eps, .. }
            | Self::L0Est { eps, .. } => eps,
            Self::SuppSample { .. } => deltasketch::support::SUPPORT_EPS,
        }
    }
}

/// Where a trial's stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum StreamSource {
    /// A fresh stream per trial, seeded from the generator seed and the trial.
    Generated(GenSpec),
    /// Fixed final frequencies and churn, interleaved afresh per trial.
    Planted {
        config: StreamConfig,
        items: Vec<PlantedItem>,
        seed: u64,
    },
    /// The same stream in every trial.
    File { path: PathBuf },
}

/// A materialized stream.
#[derive(Debug, Clone)]
pub struct TrialStream {
    pub config: StreamConfig,
    pub updates: Vec<Update>,
}

impl StreamSource {
    pub fn materialize(&self, trial: u64) -> Result<TrialStream> {
        match self {
            Self::Generated(g) => {
                let mut g = g.clone();
                g.seed = derive_seed(g.seed, trial);
                let s = generate_stream(&g)?;
                Ok(TrialStream {
                    config: s.config,
                    updates: s.updates,
                })
            }
            Self::Planted {
                config,
                items,
                seed,
            } => Ok(TrialStream {
                config: *config,
                updates: plant_stream(config, items, derive_seed(*seed, trial))?,
            }),
            Self::File { path } => {
                let f = File::open(path).map_err(|e| HarnessError::io(path.display(), e))?;
                let s = read_stream(BufReader::new(f))?;
                Ok(TrialStream {
                    config: s.config,
                    updates: s.updates,
                })
            }
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub schema: u32,
    pub algorithm: AlgorithmSpec,
    pub stream: StreamSource,
    pub trials: u64,
    pub seed: u64,
    /// JSON-lines report destination.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Record wall time; reports are then no longer byte-reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(algorithm: AlgorithmSpec, stream: StreamSource, trials: u64, seed: u64) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            algorithm,
            stream,
            trials,
            seed,
            output: None,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(HarnessError::InvalidSpec(format!(
                "schema {} is not {SCHEMA_VERSION}",
                self.schema
            )));
        }
        let a = &self.algorithm;
        if !(a.alpha() >= 1.0) {
            return Err(HarnessError::InvalidSpec("alpha must be >= 1".into()));
        }
        if !(a.eps() > 0.0 && a.eps() < 1.0) {
            return Err(HarnessError::InvalidSpec("eps must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Sketch seed of trial `t`.
    pub fn trial_seed(&self, t: u64) -> u64 {
        derive_seed(self.seed, t)
    }
}
