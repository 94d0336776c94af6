use std::collections::HashMap;

use super::{add_mod, half_width, lsb, prime_interval, residue, L0Config};
use crate::error::Result;
use crate::hashing::{sample_prime, KWiseHash, SketchRng};
use crate::stream::Update;

/// Levels with more than this many survivors count as populated.
pub const CONST_L0_THRESHOLD: u64 = 8;

/// Capacity of a per-level exact counter.
const EXACT_C: u64 = 132;

/// Buckets per exact counter: `8 c^2` keeps collisions among `c` items below
/// `1/16`.
const EXACT_BUCKETS: u64 = 8 * EXACT_C * EXACT_C;

/// Window accuracy used for the level window.
const WINDOW_EPS: f64 = 0.01;

/// Returned when no level is populated.
const FALLBACK: f64 = 50.0;

/// Value per unit of `2^j` for the highest populated level.
const LEVEL_SCALE: f64 = 20_000.0 / 99.0;

/// Exact support count of one level, up to [`EXACT_C`].
#[derive(Debug, Clone, Default)]
struct ExactCounter {
    birth: u64,
    buckets: HashMap<u64, u64>,
    overflow: bool,
}

impl ExactCounter {
    fn update(&mut self, bucket: u64, delta: u64, p: u64) {
        if self.overflow {
            return;
        }
        let cell = self.buckets.entry(bucket).or_insert(0);
        *cell = add_mod(*cell, delta, p);
        if self.buckets.len() as u64 > EXACT_C {
            self.overflow = true;
            self.buckets = HashMap::new();
        }
    }

    /// Survivors, or `None` above capacity.
    fn count(&self) -> Option<u64> {
        if self.overflow {
            None
        } else {
            Some(self.buckets.values().filter(|&&v| v != 0).count() as u64)
        }
    }
}

#[derive(Debug, Clone)]
enum LevelState {
    Pending,
    Live(ExactCounter),
    Retired,
}

/// Constant-factor support estimate `R` with `L0 <= R <= 100 L0`.
///
/// Level `j` holds the indices with `lsb(g(i)) = j`. Levels are kept only
/// within a window around `log2` of the rough estimate, and the answer is
/// read from the highest level with more than eight survivors.
#[derive(Debug, Clone)]
pub struct ConstL0 {
    log_n: u32,
    half_width: u32,
    level_hash: KWiseHash,
    bucket_hash: KWiseHash,
    p: u64,
    levels: Vec<LevelState>,
    center: Option<i64>,
    last_bar: f64,
    position: u64,
}

impl ConstL0 {
    pub fn new(config: &L0Config, rng: &mut SketchRng) -> Result<Self> {
        let (lo, hi) = prime_interval(1e4 * EXACT_C as f64 * config.log_mm());
        let log_n = config.log_n();
        let mut s = Self {
            log_n,
            half_width: half_width(config.alpha, WINDOW_EPS),
            level_hash: KWiseHash::new(2, config.n, rng),
            bucket_hash: KWiseHash::new(2, EXACT_BUCKETS, rng),
            p: sample_prime(lo, hi, rng)?.value,
            levels: vec![LevelState::Pending; log_n as usize + 1],
            center: None,
            last_bar: f64::NAN,
            position: 0,
        };
        s.slide(config.l0_floor());
        Ok(s)
    }

    /// Levels in the window for rough estimate `l0_bar`, plus the top level.
    pub fn window_for(&self, l0_bar: f64) -> (u32, u32) {
        let c = l0_bar.max(1.0).log2().floor() as i64;
        let w = self.half_width as i64;
        let top = self.log_n as i64;
        ((c - w).clamp(0, top) as u32, (c + w).clamp(0, top) as u32)
    }

    pub fn slide(&mut self, l0_bar: f64) {
        if l0_bar == self.last_bar {
            return;
        }
        self.last_bar = l0_bar;
        let c = l0_bar.max(1.0).log2().floor() as i64;
        if self.center == Some(c) {
            return;
        }
        self.center = Some(c);
        let (lo, hi) = self.window_for(l0_bar);
        for j in 0..=self.log_n {
            let wanted = j == self.log_n || (lo..=hi).contains(&j);
            let slot = &mut self.levels[j as usize];
            match slot {
                LevelState::Pending if wanted => {
                    *slot = LevelState::Live(ExactCounter {
                        birth: self.position,
                        ..ExactCounter::default()
                    })
                }
                LevelState::Live(_) if !wanted => *slot = LevelState::Retired,
                _ => {}
            }
        }
    }

    pub fn update(&mut self, u: Update, l0_bar: f64) {
        self.slide(l0_bar);
        self.position += 1;
        let j = lsb(self.level_hash.eval(u.index), self.log_n);
        if let LevelState::Live(level) = &mut self.levels[j as usize] {
            level.update(
                self.bucket_hash.eval(u.index),
                residue(u.delta, self.p),
                self.p,
            );
        }
    }

    /// Survivor count of level `j`: `Some(None)` above capacity, `None` when
    /// the level is not held.
    pub fn survivors(&self, j: u32) -> Option<Option<u64>> {
        match self.levels.get(j as usize) {
            Some(LevelState::Live(l)) => Some(l.count()),
            _ => None,
        }
    }

    pub fn birth(&self, j: u32) -> Option<u64> {
        match self.levels.get(j as usize) {
            Some(LevelState::Live(l)) => Some(l.birth),
            _ => None,
        }
    }

    /// `(20000/99) 2^j` for the highest held level with more than eight
    /// survivors, else 50.
    pub fn query(&self) -> f64 {
        (0..=self.log_n)
            .rev()
            .find(|&j| match self.survivors(j) {
                Some(Some(c)) => c > CONST_L0_THRESHOLD,
                Some(None) => true,
                None => false,
            })
            .map_or(FALLBACK, |j| LEVEL_SCALE * (1u64 << j) as f64)
    }
}
