use std::collections::HashMap;

use rand::Rng;

use crate::error::{Result, SketchError};
use crate::hashing::{mulmod61, seeded_rng, KWiseHash, MERSENNE_61};

/// Repetitions of the bucket array.
pub const RECOVERY_ROWS: usize = 4;

/// `count`, index-weighted sum and fingerprint of the deltas in one bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bucket {
    pub count: i64,
    pub isum: i128,
    /// `sum(delta * r^index)` over `GF(2^61 - 1)`.
    pub fingerprint: u64,
}

impl Bucket {
    fn add(&mut self, index: u64, delta: i64, power: u64) {
        self.count += delta;
        self.isum += index as i128 * delta as i128;
        let term = mulmod61(signed_residue(delta), power);
        self.fingerprint = (self.fingerprint + term) % MERSENNE_61;
    }

    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

fn signed_residue(x: i64) -> u64 {
    x.rem_euclid(MERSENNE_61 as i64) as u64
}

fn pow61(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mulmod61(acc, base);
        }
        base = mulmod61(base, base);
        exp >>= 1;
    }
    acc
}

/// Result of decoding a recovery sketch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recovered {
    /// Nonzero coordinates in index order.
    Sparse(Vec<(u64, i64)>),
    Dense,
}

/// Linear sketch that returns any vector with at most `s` nonzeros exactly
/// and reports [`Recovered::Dense`] otherwise.
///
/// Each of [`RECOVERY_ROWS`] rows hashes indices pairwise into `2s` buckets.
/// Buckets are stored sparsely. Decoding peels buckets that hold exactly one
/// index, checked by the fingerprint, until nothing is left.
#[derive(Debug, Clone)]
pub struct SparseRecovery {
    n: u64,
    s: usize,
    seed: u64,
    r: u64,
    hashes: Vec<KWiseHash>,
    buckets: HashMap<(u8, u64), Bucket>,
}

impl SparseRecovery {
    pub fn new(n: u64, s: usize, seed: u64) -> Result<Self> {
        if s == 0 {
            return Err(SketchError::param("s", "must be positive"));
        }
        if n == 0 || n >= MERSENNE_61 {
            return Err(SketchError::param("n", "must lie in [1, 2^61 - 1)"));
        }
        let mut rng = seeded_rng(seed);
        let r = rng.random_range(2..MERSENNE_61);
        let width = 2 * s as u64;
        let hashes = (0..RECOVERY_ROWS)
            .map(|_| KWiseHash::new(2, width, &mut rng))
            .collect();
        Ok(Self {
            n,
            s,
            seed,
            r,
            hashes,
            buckets: HashMap::new(),
        })
    }

    pub fn sparsity(&self) -> usize {
        self.s
    }

    /// `r^index`, shared by every bucket an index touches.
    pub fn power(&self, index: u64) -> u64 {
        pow61(self.r, index)
    }

    pub fn update(&mut self, index: u64, delta: i64) {
        let power = self.power(index);
        for (row, h) in self.hashes.iter().enumerate() {
            let key = (row as u8, h.eval(index));
            let b = self.buckets.entry(key).or_default();
            b.add(index, delta, power);
            if b.is_empty() {
                self.buckets.remove(&key);
            }
        }
    }

    /// Adds `other` cell by cell; both must come from the same seed.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.seed != other.seed || self.n != other.n || self.s != other.s {
            return Err(SketchError::SeedMismatch);
        }
        for (&key, ob) in &other.buckets {
            let b = self.buckets.entry(key).or_default();
            b.count += ob.count;
            b.isum += ob.isum;
            b.fingerprint = (b.fingerprint + ob.fingerprint) % MERSENNE_61;
            if b.is_empty() {
                self.buckets.remove(&key);
            }
        }
        Ok(())
    }

    /// Nonempty buckets, keyed by `(row, bucket)`.
    pub fn cells(&self) -> &HashMap<(u8, u64), Bucket> {
        &self.buckets
    }

    /// The index a bucket holds if it holds exactly one.
    fn pure(&self, row: usize, bucket: u64, b: &Bucket) -> Option<u64> {
        if b.count == 0 || b.isum % b.count as i128 != 0 {
            return None;
        }
        let idx = b.isum / b.count as i128;
        if idx < 0 || idx >= self.n as i128 {
            return None;
        }
        let idx = idx as u64;
        let expect = mulmod61(signed_residue(b.count), self.power(idx));
        (self.hashes[row].eval(idx) == bucket && expect == b.fingerprint).then_some(idx)
    }

    pub fn decode(&self) -> Recovered {
        let mut work = self.buckets.clone();
        let mut pending: Vec<(u8, u64)> = work.keys().copied().collect();
        let mut found: HashMap<u64, i64> = HashMap::new();
        while let Some(key) = pending.pop() {
            let Some(b) = work.get(&key) else { continue };
            let Some(index) = self.pure(key.0 as usize, key.1, b) else {
                continue;
            };
            let count = b.count;
            *found.entry(index).or_insert(0) += count;
            if found.len() > self.s {
                return Recovered::Dense;
            }
            let power = self.power(index);
            for (row, h) in self.hashes.iter().enumerate() {
                let k = (row as u8, h.eval(index));
                let cell = work.entry(k).or_default();
                cell.add(index, -count, power);
                if cell.is_empty() {
                    work.remove(&k);
                } else {
                    pending.push(k);
                }
            }
        }
        if !work.is_empty() {
            return Recovered::Dense;
        }
        let mut out: Vec<(u64, i64)> = found.into_iter().filter(|&(_, v)| v != 0).collect();
        out.sort_unstable();
        Recovered::Sparse(out)
    }
}
