use std::collections::BTreeSet;

use crate::hashing::{KWiseHash, MERSENNE_61};

/// Factor applied to the k-minimum-values estimate so that an estimate
/// within `sqrt(8)` of `F0` in either direction lands in `[F0, 8 F0]`.
const KMV_SCALE: f64 = 2.828_427_124_746_19;

/// Nondecreasing rough distinct-count tracker.
///
/// Keeps the `k` smallest pairwise hashes of indices seen so far. Below `k`
/// distinct hashes the count is exact; above, it reports the running max of
/// the scaled k-minimum-values estimate.
#[derive(Debug, Clone)]
pub struct RoughF0 {
    hash: KWiseHash,
    k: usize,
    smallest: BTreeSet<u64>,
    current: f64,
}

impl RoughF0 {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            hash: KWiseHash::from_seed(2, MERSENNE_61, seed),
            k: k.max(2),
            smallest: BTreeSet::new(),
            current: 0.0,
        }
    }

    pub fn update(&mut self, index: u64) {
        let h = self.hash.eval(index);
        if self.smallest.len() == self.k {
            match self.smallest.last() {
                Some(&max) if h < max => {}
                _ => return,
            }
        }
        if !self.smallest.insert(h) {
            return;
        }
        if self.smallest.len() > self.k {
            self.smallest.pop_last();
        }
        let est = self.level_estimate();
        if est > self.current {
            self.current = est;
        }
    }

    fn level_estimate(&self) -> f64 {
        if self.smallest.len() < self.k {
            return self.smallest.len() as f64;
        }
        let vk = *self.smallest.last().expect("k >= 2 hashes held") as f64 + 1.0;
        KMV_SCALE * (self.k - 1) as f64 * MERSENNE_61 as f64 / vk
    }

    /// `F~0`: never decreases over the stream.
    pub fn estimate(&self) -> f64 {
        self.current
    }
}
