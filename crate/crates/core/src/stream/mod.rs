//! Turnstile stream model: updates, configuration, the exact oracle and
//! synthetic generators.
//!
//! A stream over the universe `[n]` is a sequence of [`Update`]s. Updates
//! with `|delta| > 1` stay whole in the model; sketches expand them into
//! unit updates internally.

mod alpha;
mod generate;
mod io;
mod oracle;

pub use alpha::Alpha;
pub use generate::{generate_stream, plant_stream, GenSpec, GeneratedStream, PlantedItem, Shape};
pub use io::{read_stream, write_stream, StreamFile};
pub use oracle::ExactState;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SketchError};

/// One stream event: add `delta` to coordinate `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Update {
    pub index: u64,
    pub delta: i64,
}

impl Update {
    pub const fn new(index: u64, delta: i64) -> Self {
        Self { index, delta }
    }

    /// Unit mass carried by the update once expanded.
    pub fn magnitude(&self) -> u64 {
        self.delta.unsigned_abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    /// Frequencies stay nonnegative at every prefix.
    StrictTurnstile,
    GeneralTurnstile,
    InsertionOnly,
}

impl StreamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamKind::StrictTurnstile => "strict-turnstile",
            StreamKind::GeneralTurnstile => "general-turnstile",
            StreamKind::InsertionOnly => "insertion-only",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamKind {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict-turnstile" | "strict" => Ok(StreamKind::StrictTurnstile),
            "general-turnstile" | "general" => Ok(StreamKind::GeneralTurnstile),
            "insertion-only" | "insertion" => Ok(StreamKind::InsertionOnly),
            other => Err(SketchError::param(
                "kind",
                format!("unknown stream kind `{other}`"),
            )),
        }
    }
}

/// Which norm an α bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Support size.
    L0,
    /// Sum of absolute values.
    L1,
}

/// Universe and update constraints for a stream.
///
/// `log2(m_max * max_delta)` is assumed to be `O(log2 n)`; this is not
/// enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Universe size, a power of two.
    pub n: u64,
    /// Upper bound on the unit-expanded stream length.
    pub m_max: u64,
    /// Upper bound on `|delta|` for a single update.
    pub max_delta: u64,
    pub kind: StreamKind,
}

impl StreamConfig {
    pub fn new(n: u64, m_max: u64, max_delta: u64, kind: StreamKind) -> Result<Self> {
        let cfg = Self {
            n,
            m_max,
            max_delta,
            kind,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(SketchError::param(
                "n",
                format!("{} is not a power of two >= 2", self.n),
            ));
        }
        if self.n > 1 << 60 {
            return Err(SketchError::param("n", "universe larger than 2^60"));
        }
        if self.max_delta == 0 || self.max_delta > i64::MAX as u64 {
            return Err(SketchError::param("max_delta", "must be in [1, i64::MAX]"));
        }
        if self.m_max == 0 {
            return Err(SketchError::param("m_max", "must be positive"));
        }
        Ok(())
    }

    /// `log2 n`, exact because `n` is a power of two.
    pub fn log_n(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// `log2(m_max * max_delta)`, at least 1.
    pub fn log_mm(&self) -> f64 {
        ((self.m_max as f64) * (self.max_delta as f64))
            .log2()
            .max(1.0)
    }

    /// Checks index range and delta magnitude.
    pub fn check(&self, u: &Update) -> Result<()> {
        if u.index >= self.n {
            return Err(SketchError::IndexOutOfRange {
                index: u.index,
                n: self.n,
            });
        }
        if u.delta == 0 || u.magnitude() > self.max_delta {
            return Err(SketchError::InvalidDelta {
                delta: u.delta,
                max: self.max_delta,
            });
        }
        if self.kind == StreamKind::InsertionOnly && u.delta < 0 {
            return Err(SketchError::InvalidDelta {
                delta: u.delta,
                max: self.max_delta,
            });
        }
        Ok(())
    }
}

/// Total unit mass `sum |delta|` of a sequence of updates.
pub fn total_mass(updates: &[Update]) -> u64 {
    updates.iter().map(Update::magnitude).sum()
}
