use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::scheduler::{ClockKind, LevelScheduler};
use crate::error::{Result, SketchError};
use crate::hashing::{seeded_rng, SketchRng};
use crate::stream::Update;

/// Sampling base `s = next_pow2(c_lvl * alpha^2 * log^3(n) / (delta * eps^2))`.
pub fn level_base(n: u64, eps: f64, delta: f64, alpha: f64, c_lvl: f64) -> Result<u64> {
    if n < 2 || !n.is_power_of_two() {
        return Err(SketchError::param("n", "must be a power of two >= 2"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SketchError::param("eps", "must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SketchError::param("delta", "must lie in (0, 1)"));
    }
    if !(alpha >= 1.0) || !(c_lvl > 0.0) {
        return Err(SketchError::param(
            "alpha",
            "alpha must be >= 1 and c_lvl positive",
        ));
    }
    let log_n = n.trailing_zeros() as f64;
    let raw = c_lvl * alpha * alpha * log_n.powi(3) / (delta * eps * eps);
    Ok((raw.ceil().clamp(2.0, (1u64 << 62) as f64) as u64).next_power_of_two())
}

/// Signed sample counts of one level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounters {
    pub plus: u64,
    pub minus: u64,
}

impl LevelCounters {
    pub fn net(&self) -> i128 {
        self.plus as i128 - self.minus as i128
    }
}

/// Sums a strict-turnstile stream from per-level samples whose windows are
/// picked by a Morris counter.
#[derive(Debug, Clone)]
pub struct StrictL1Estimator {
    scheduler: LevelScheduler<LevelCounters>,
    rng: SketchRng,
    peak_samples: u64,
}

impl StrictL1Estimator {
    pub fn new(n: u64, eps: f64, delta: f64, alpha: f64, seed: u64) -> Result<Self> {
        Self::with_base(
            level_base(n, eps, delta, alpha, 1.0)?,
            ClockKind::Morris,
            seed,
        )
    }

    pub fn with_base(s: u64, clock: ClockKind, seed: u64) -> Result<Self> {
        Ok(Self {
            scheduler: LevelScheduler::new(s, clock)?,
            rng: seeded_rng(seed),
            peak_samples: 0,
        })
    }

    pub fn scheduler(&self) -> &LevelScheduler<LevelCounters> {
        &self.scheduler
    }

    pub fn update(&mut self, u: Update) {
        let positive = u.delta > 0;
        let Self {
            scheduler,
            rng,
            peak_samples,
            ..
        } = self;
        let log_s = scheduler.log_s();
        scheduler.advance(
            u.magnitude(),
            rng,
            |_| LevelCounters::default(),
            |level, count, rng| {
                let kept = sample_units(count, level.j * log_s, rng);
                let c = &mut level.payload;
                if positive {
                    c.plus += kept;
                } else {
                    c.minus += kept;
                }
                *peak_samples = (*peak_samples).max(c.plus + c.minus);
            },
        );
    }

    /// Rescaled signed count of the oldest live level.
    pub fn estimate(&self) -> Result<f64> {
        let oldest = self.scheduler.oldest().ok_or(SketchError::NoLiveLevel)?;
        Ok(self.scheduler.scale(oldest.j) * oldest.payload.net() as f64)
    }

    /// Largest number of samples any level has held.
    pub fn peak_samples(&self) -> u64 {
        self.peak_samples
    }

    /// Bits needed by the widest live counter.
    pub fn counter_bits(&self) -> u32 {
        let max = self
            .scheduler
            .live()
            .iter()
            .map(|l| l.payload.plus.max(l.payload.minus))
            .max()
            .unwrap_or(0);
        64 - max.leading_zeros()
    }
}

/// Keeps each of `count` units with probability `2^-bits`.
pub(crate) fn sample_units<R: rand::Rng + ?Sized>(count: u64, bits: u32, rng: &mut R) -> u64 {
    if bits == 0 {
        return count;
    }
    if bits >= 64 {
        return Binomial::new(count, 0.5f64.powi(bits as i32)).map_or(0, |b| b.sample(rng));
    }
    Binomial::new(count, 1.0 / (1u64 << bits) as f64)
        .expect("rate in (0, 1]")
        .sample(rng)
}
