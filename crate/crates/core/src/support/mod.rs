//! Support sampling for bounded-deletion strict-turnstile streams.
//!
//! Level `j` subsamples the indices with `h(i) <= 2^j` and keeps an
//! `s`-sparse recovery sketch of the stream suffix since the level was
//! created. Only levels near `log2(n s / 3R)` (with `R` a rough support
//! estimate) and a permanent top band are held. Every strictly positive
//! coordinate of a decoded suffix lies in the support of the final vector.

mod recovery;

pub use recovery::{Bucket, Recovered, SparseRecovery, RECOVERY_ROWS};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, KWiseHash};
use crate::l0::RoughF0;
use crate::stream::Update;

/// Recovery budget per requested index.
pub const SPARSITY_PER_K: usize = 205;

/// Accuracy used to size the level window.
pub const SUPPORT_EPS: f64 = 1.0 / 48.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub n: u64,
    pub k: usize,
    pub delta: f64,
    pub alpha: f64,
    /// Hashes kept by the rough support tracker.
    pub kmv_k: usize,
}

impl SupportConfig {
    pub fn new(n: u64, k: usize, delta: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n,
            k,
            delta,
            alpha,
            kmv_k: 32,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(SketchError::param("n", "must be a power of two >= 4"));
        }
        if self.k == 0 {
            return Err(SketchError::param("k", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SketchError::param("delta", "must lie in (0, 1)"));
        }
        if !(self.alpha >= 1.0) {
            return Err(SketchError::param("alpha", "must be >= 1"));
        }
        Ok(())
    }

    pub fn log_n(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Sparsity `s = 205 k` of every level sketch.
    pub fn s(&self) -> usize {
        SPARSITY_PER_K * self.k
    }

    /// Window half-width `2 log2(alpha / eps)`.
    pub fn half_width(&self) -> f64 {
        2.0 * (self.alpha / SUPPORT_EPS).log2()
    }

    /// Lowest level of the permanent band,
    /// `ceil(log2(n s log log n / (24 log n)))`, at most `log n`.
    pub fn band_floor(&self) -> u32 {
        let log_n = self.log_n() as f64;
        let x = self.n as f64 * self.s() as f64 * log_n.log2().max(1.0) / (24.0 * log_n);
        (x.log2().ceil().max(0.0) as u32).min(self.log_n())
    }

    /// Independent copies: each succeeds with probability at least 1/3.
    pub fn instances(&self) -> usize {
        ((1.0 / self.delta).ln() / 1.5f64.ln()).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone)]
enum LevelState {
    Pending,
    Live { birth: u64, sketch: SparseRecovery },
    Retired,
}

/// One copy of the sampler.
#[derive(Debug, Clone)]
pub struct SupportInstance {
    config: SupportConfig,
    seed: u64,
    h: KWiseHash,
    rough: RoughF0,
    levels: Vec<LevelState>,
    last_r: f64,
    position: u64,
}

impl SupportInstance {
    pub fn new(config: SupportConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut inst = Self {
            config,
            seed,
            h: KWiseHash::from_seed(2, config.n, derive_seed(seed, 0)),
            rough: RoughF0::new(config.kmv_k, derive_seed(seed, 1)),
            levels: vec![LevelState::Pending; config.log_n() as usize + 1],
            last_r: f64::NAN,
            position: 0,
        };
        inst.slide(1.0)?;
        Ok(inst)
    }

    /// `h(i) <= 2^j`.
    pub fn in_level(&self, index: u64, j: u32) -> bool {
        self.h.eval(index) <= 1u64 << j
    }

    /// Inclusive level range of the window for rough estimate `r`, before
    /// the permanent band is added.
    pub fn window_for(&self, r: f64) -> (f64, f64) {
        let c = (self.config.n as f64 * self.config.s() as f64 / (3.0 * r)).log2();
        let w = self.config.half_width();
        (c - w, c + w)
    }

    fn slide(&mut self, r: f64) -> Result<()> {
        if r == self.last_r {
            return Ok(());
        }
        self.last_r = r;
        let (lo, hi) = self.window_for(r);
        let band = self.config.band_floor();
        for j in 0..=self.config.log_n() {
            let wanted = j >= band || (lo..=hi).contains(&(j as f64));
            let slot = &mut self.levels[j as usize];
            match slot {
                LevelState::Pending if wanted => {
                    let sketch = SparseRecovery::new(
                        self.config.n,
                        self.config.s(),
                        derive_seed(self.seed, 2 + j as u64),
                    )?;
                    *slot = LevelState::Live {
                        birth: self.position,
                        sketch,
                    };
                }
                LevelState::Live { .. } if !wanted => *slot = LevelState::Retired,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn update(&mut self, u: Update) -> Result<()> {
        self.rough.update(u.index);
        self.slide(self.rough.estimate().max(1.0))?;
        self.position += 1;
        let hv = self.h.eval(u.index);
        for (j, level) in self.levels.iter_mut().enumerate() {
            if let LevelState::Live { sketch, .. } = level {
                if hv <= 1u64 << j {
                    sketch.update(u.index, u.delta);
                }
            }
        }
        Ok(())
    }

    pub fn live_levels(&self) -> Vec<u32> {
        (0..=self.config.log_n())
            .filter(|&j| self.birth(j).is_some())
            .collect()
    }

    /// Updates processed before level `j` was created.
    pub fn birth(&self, j: u32) -> Option<u64> {
        match self.levels.get(j as usize) {
            Some(LevelState::Live { birth, .. }) => Some(*birth),
            _ => None,
        }
    }

    pub fn is_retired(&self, j: u32) -> bool {
        matches!(self.levels.get(j as usize), Some(LevelState::Retired))
    }

    pub fn sketch(&self, j: u32) -> Option<&SparseRecovery> {
        match self.levels.get(j as usize) {
            Some(LevelState::Live { sketch, .. }) => Some(sketch),
            _ => None,
        }
    }

    /// Strictly positive coordinates of every level that decodes, and the
    /// number of levels that decoded.
    pub fn query(&self) -> (BTreeSet<u64>, usize) {
        let mut out = BTreeSet::new();
        let mut decoded = 0;
        for j in self.live_levels() {
            if let Some(Recovered::Sparse(v)) = self.sketch(j).map(SparseRecovery::decode) {
                decoded += 1;
                out.extend(v.into_iter().filter(|&(_, c)| c > 0).map(|(i, _)| i));
            }
        }
        (out, decoded)
    }
}

/// Output of [`SupportSampler::query`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSample {
    /// Indices in increasing order.
    pub indices: Vec<u64>,
    /// Level sketches that decoded, over all copies.
    pub decoded_levels: usize,
}

/// Union of [`SupportConfig::instances`] independent copies.
#[derive(Debug, Clone)]
pub struct SupportSampler {
    config: SupportConfig,
    instances: Vec<SupportInstance>,
}

impl SupportSampler {
    pub fn new(config: SupportConfig, seed: u64) -> Result<Self> {
        let instances = (0..config.instances() as u64)
            .map(|c| SupportInstance::new(config, derive_seed(seed, c)))
            .collect::<Result<_>>()?;
        Ok(Self { config, instances })
    }

    pub fn config(&self) -> &SupportConfig {
        &self.config
    }

    pub fn instances(&self) -> &[SupportInstance] {
        &self.instances
    }

    pub fn update(&mut self, u: Update) -> Result<()> {
        self.instances
            .iter_mut()
            .try_for_each(|inst| inst.update(u))
    }

    pub fn query(&self) -> SupportSample {
        let mut all = BTreeSet::new();
        let mut decoded_levels = 0;
        for inst in &self.instances {
            let (set, d) = inst.query();
            all.extend(set);
            decoded_levels += d;
        }
        SupportSample {
            indices: all.into_iter().collect(),
            decoded_levels,
        }
    }
}

/// One pass of `updates` through a fresh sampler.
pub fn support_sample(
    config: SupportConfig,
    updates: &[Update],
    seed: u64,
) -> Result<SupportSample> {
    let mut s = SupportSampler::new(config, seed)?;
    for &u in updates {
        s.update(u)?;
    }
    Ok(s.query())
}
