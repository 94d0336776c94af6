use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

/// Approximate counter holding only an exponent `v`; estimates `2^v - 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorrisCounter {
    v: u32,
}

/// Exponent cap keeping `2^v` inside `u64`.
const MAX_EXPONENT: u32 = 63;

impl MorrisCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn exponent(&self) -> u32 {
        self.v
    }

    pub fn estimate(&self) -> u64 {
        (1u64 << self.v) - 1
    }

    /// Probability that the next tick increments the exponent.
    pub fn increment_probability(&self) -> f64 {
        0.5f64.powi(self.v as i32)
    }

    /// One event: increments the exponent with probability `2^-v`.
    pub fn tick<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.v < MAX_EXPONENT && rng.random_bool(self.increment_probability()) {
            self.v += 1;
        }
    }

    /// Number of events that pass before the next increment.
    pub(crate) fn skip<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.v == 0 {
            return 0;
        }
        if self.v >= MAX_EXPONENT {
            return u64::MAX;
        }
        Geometric::new(self.increment_probability())
            .expect("probability in (0, 1]")
            .sample(rng)
    }

    pub(crate) fn bump(&mut self) {
        self.v = (self.v + 1).min(MAX_EXPONENT);
    }

    /// `count` events at once by skipping geometrically between increments;
    /// same distribution as calling [`tick`](Self::tick) `count` times.
    pub fn tick_n<R: Rng + ?Sized>(&mut self, mut count: u64, rng: &mut R) {
        while count > 0 {
            let skip = self.skip(rng);
            if skip >= count {
                return;
            }
            count -= skip + 1;
            self.bump();
        }
    }
}
