use std::collections::HashMap;

use super::matrix::{invert_occupancy, CellHash};
use super::{add_mod, prime_interval, residue, L0Config};
use crate::error::Result;
use crate::hashing::{sample_prime, KWiseHash, SketchRng};
use crate::stream::Update;

/// Output of a branch that only answers below a size threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallResult {
    Value(f64),
    Large,
}

impl SmallResult {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(v),
            Self::Large => None,
        }
    }
}

/// Exact support size while at most `c` distinct indices have been seen.
///
/// Indices are hashed pairwise into `64 c^2` buckets holding signed sums mod
/// a random prime. More than `c` touched buckets switches to `Large` and
/// frees the buckets.
#[derive(Debug, Clone)]
pub struct SmallF0 {
    c: u64,
    hash: KWiseHash,
    p: u64,
    buckets: HashMap<u64, u64>,
    large: bool,
}

impl SmallF0 {
    pub fn new(config: &L0Config, rng: &mut SketchRng) -> Result<Self> {
        let c = config.small_threshold();
        let d = 1e4 * c as f64 * config.log_mm();
        let (lo, hi) = prime_interval(d);
        Ok(Self {
            c,
            hash: KWiseHash::new(2, 64 * c * c, rng),
            p: sample_prime(lo, hi, rng)?.value,
            buckets: HashMap::new(),
            large: false,
        })
    }

    pub fn threshold(&self) -> u64 {
        self.c
    }

    pub fn update(&mut self, u: Update) {
        if self.large {
            return;
        }
        let b = self.hash.eval(u.index);
        let cell = self.buckets.entry(b).or_insert(0);
        *cell = add_mod(*cell, residue(u.delta, self.p), self.p);
        if self.buckets.len() as u64 > self.c {
            self.large = true;
            self.buckets = HashMap::new();
        }
    }

    pub fn query(&self) -> SmallResult {
        if self.large {
            SmallResult::Large
        } else {
            SmallResult::Value(self.buckets.values().filter(|&&v| v != 0).count() as f64)
        }
    }
}

/// One collapsed row of `2K` bins over the whole universe.
///
/// Answers `(1 ± eps) L0` while the inverted count stays at or below
/// `(1 + eps) K / 16`, and `Large` otherwise, so `Large` implies
/// `L0 > K / 16` whenever the count is accurate.
#[derive(Debug, Clone)]
pub struct SmallL0 {
    cells: Vec<u64>,
    hash: CellHash,
    cut: f64,
}

impl SmallL0 {
    pub fn new(config: &L0Config, rng: &mut SketchRng) -> Result<Self> {
        let k = config.k();
        let (lo, hi) = config.matrix_primes();
        let p = sample_prime(lo, hi, rng)?.value;
        Ok(Self {
            cells: vec![0; 2 * k as usize],
            hash: CellHash::new(k, 2 * k, config.k_ind(), p, rng),
            cut: (1.0 + config.eps) * k as f64 / 16.0,
        })
    }

    pub fn width(&self) -> usize {
        self.cells.len()
    }

    pub fn update(&mut self, u: Update) {
        self.hash.apply(&mut self.cells, u);
    }

    pub fn occupied(&self) -> u64 {
        self.cells.iter().filter(|&&c| c != 0).count() as u64
    }

    pub fn query(&self) -> SmallResult {
        match invert_occupancy(self.occupied(), self.cells.len() as u64) {
            Some(v) if v <= self.cut => SmallResult::Value(v),
            _ => SmallResult::Large,
        }
    }
}
