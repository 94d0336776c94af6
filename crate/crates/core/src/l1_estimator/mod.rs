//! `(1 ± ε)` estimation of `||f||_1`.
//!
//! Strict-turnstile streams need only a signed sample count per level; the
//! general case keeps a sampled Cauchy sketch. Both drive their sampling
//! levels from a [`LevelScheduler`] so the stream length need not be known.

mod general;
mod morris;
mod scheduler;
mod strict;

pub use general::{Accumulators, GeneralL1Config, GeneralL1Estimator};
pub use morris::MorrisCounter;
pub use scheduler::{ClockKind, Level, LevelScheduler};
pub(crate) use strict::sample_units;
pub use strict::{level_base, LevelCounters, StrictL1Estimator};
