//! Countsketch run on per-row uniform samples of the stream.
//!
//! Every row keeps its own independent sample. The sampling rate `2^-p` is
//! halved each time the unit position reaches `2^r * S` for `r >= 1`, and
//! existing counters are thinned by `Binomial(counter, 1/2)` at that moment,
//! so a row always holds between `S` and `2S` sampled units once sampling
//! starts. Queries rescale by `2^p`.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{seeded_rng, KWiseHash, SignHash, SketchRng};
use crate::stream::Update;

/// Independence of the bucket and sign hashes.
const ROW_HASH_K: usize = 4;

/// Sizing of a [`CsssTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsssConfig {
    pub n: u64,
    /// Sensitivity; rows have `6k` buckets.
    pub k: usize,
    pub eps: f64,
    pub alpha: f64,
    pub c_d: f64,
    pub c_t: f64,
    pub c_s: f64,
}

impl CsssConfig {
    pub fn new(n: u64, k: usize, eps: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n,
            k,
            eps,
            alpha,
            c_d: 2.0,
            c_t: 1.0,
            c_s: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_constants(mut self, c_d: f64, c_t: f64, c_s: f64) -> Result<Self> {
        self.c_d = c_d;
        self.c_t = c_t;
        self.c_s = c_s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(SketchError::param("n", "must be a power of two >= 2"));
        }
        if self.k == 0 {
            return Err(SketchError::param("k", "must be positive"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SketchError::param("eps", "must lie in (0, 1)"));
        }
        if !(self.alpha >= 1.0) {
            return Err(SketchError::param("alpha", "must be >= 1"));
        }
        if !(self.c_d > 0.0 && self.c_t > 0.0 && self.c_s > 0.0) {
            return Err(SketchError::param("constants", "must be positive"));
        }
        Ok(())
    }

    fn log_n(&self) -> f64 {
        self.n.trailing_zeros() as f64
    }

    /// Row count `ceil(c_d * log2 n)`.
    pub fn rows(&self) -> usize {
        ((self.c_d * self.log_n()).ceil() as usize).max(1)
    }

    pub fn width(&self) -> usize {
        6 * self.k
    }

    /// `T = c_T (4 / eps^2 + log2 n)`.
    pub fn tail_param(&self) -> f64 {
        self.c_t * (4.0 / (self.eps * self.eps) + self.log_n())
    }

    /// Sample budget `S = c_S (alpha / eps)^2 T^2 log2 n`, at least 1.
    pub fn sample_budget(&self) -> f64 {
        let t = self.tail_param();
        (self.c_s * (self.alpha * self.alpha) / (self.eps * self.eps) * t * t * self.log_n())
            .max(1.0)
    }

    /// Position unit at which halving starts: `ceil(S)`, capped to fit.
    pub fn halving_base(&self) -> u64 {
        let s = self.sample_budget().ceil();
        if s >= (1u64 << 62) as f64 {
            1 << 62
        } else {
            s as u64
        }
    }

    /// Counter ceiling `S^3`, capped at `2^62`.
    pub fn saturation_bound(&self) -> u64 {
        let s3 = self.sample_budget().powi(3);
        if s3 >= (1u64 << 62) as f64 {
            1 << 62
        } else {
            s3 as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RowHash {
    bucket: KWiseHash,
    sign: SignHash,
}

/// The sampled Countsketch table.
#[derive(Debug, Clone)]
pub struct CsssTable {
    config: CsssConfig,
    rows: Vec<RowHash>,
    plus: Vec<u64>,
    minus: Vec<u64>,
    p_exp: u32,
    position: u64,
    failed: bool,
    sampling: bool,
    rng: SketchRng,
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

fn lower_median<T: Copy + PartialOrd>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    values[(values.len() - 1) / 2]
}

impl CsssTable {
    pub fn new(config: CsssConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let width = config.width() as u64;
        let rows: Vec<RowHash> = (0..config.rows())
            .map(|_| RowHash {
                bucket: KWiseHash::new(ROW_HASH_K, width, &mut rng),
                sign: SignHash::new(ROW_HASH_K, &mut rng),
            })
            .collect();
        let cells = rows.len() * config.width();
        Ok(Self {
            config,
            rows,
            plus: vec![0; cells],
            minus: vec![0; cells],
            p_exp: 0,
            position: 0,
            failed: false,
            sampling: true,
            rng,
        })
    }

    /// Same table with sampling switched off: every update is stored and
    /// no halving happens. Equivalent to a plain Countsketch.
    pub fn unsampled(config: CsssConfig, seed: u64) -> Result<Self> {
        let mut t = Self::new(config, seed)?;
        t.sampling = false;
        Ok(t)
    }

    pub fn config(&self) -> &CsssConfig {
        &self.config
    }

    pub fn p_exp(&self) -> u32 {
        self.p_exp
    }

    /// Unit-expanded position in the stream.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    fn width(&self) -> usize {
        self.config.width()
    }

    /// Position at which the next halving fires.
    fn next_halving(&self) -> u64 {
        self.config
            .halving_base()
            .checked_shl(self.p_exp + 1)
            .filter(|&v| v >> (self.p_exp + 1) == self.config.halving_base())
            .unwrap_or(u64::MAX)
    }

    fn halve(&mut self) {
        let rng = &mut self.rng;
        for c in self.plus.iter_mut().chain(self.minus.iter_mut()) {
            *c = binomial(*c, 0.5, rng);
        }
        self.p_exp += 1;
    }

    /// Feeds one update, expanded into `|delta|` unit updates.
    pub fn update(&mut self, u: Update) -> Result<()> {
        if self.failed {
            return Err(SketchError::Failed);
        }
        let mut remaining = u.magnitude();
        let positive = u.delta > 0;
        let bound = self.config.saturation_bound();
        while remaining > 0 {
            let chunk = if self.sampling {
                let next = self.next_halving();
                if self.position == next {
                    self.halve();
                    continue;
                }
                remaining.min(next - self.position)
            } else {
                remaining
            };
            let rate = if self.sampling {
                0.5f64.powi(self.p_exp as i32)
            } else {
                1.0
            };
            let width = self.width();
            for (r, row) in self.rows.iter().enumerate() {
                let count = binomial(chunk, rate, &mut self.rng);
                if count == 0 {
                    continue;
                }
                let cell = r * width + row.bucket.eval(u.index) as usize;
                let target = if positive == (row.sign.eval(u.index) > 0) {
                    &mut self.plus[cell]
                } else {
                    &mut self.minus[cell]
                };
                *target = target.saturating_add(count);
                if *target > bound {
                    self.failed = true;
                    return Err(SketchError::Saturated { bound });
                }
            }
            self.position += chunk;
            remaining -= chunk;
        }
        Ok(())
    }

    /// Rescaled signed value of cell `(row, bucket)`.
    fn cell_value(&self, row: usize, bucket: usize) -> i128 {
        let cell = row * self.width() + bucket;
        (self.plus[cell] as i128 - self.minus[cell] as i128) << self.p_exp
    }

    /// Lower median over rows of `2^p * g(j) * (a+ - a-)`.
    pub fn query(&self, j: u64) -> Result<i64> {
        if self.failed {
            return Err(SketchError::Failed);
        }
        let mut ests: Vec<i128> = self
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.sign.eval(j) as i128 * self.cell_value(r, row.bucket.eval(j) as usize)
            })
            .collect();
        let m = lower_median(&mut ests);
        Ok(m.clamp(i64::MIN as i128, i64::MAX as i128) as i64)
    }

    /// Estimates for every item of the universe.
    pub fn query_all(&self) -> Result<Vec<i64>> {
        (0..self.config.n).map(|j| self.query(j)).collect()
    }

    /// The `k` items with largest `|estimate|` (ties by smaller index);
    /// zero estimates are omitted.
    pub fn topk(&self, k: usize) -> Result<Vec<(u64, i64)>> {
        let mut all: Vec<(u64, i64)> = self
            .query_all()?
            .into_iter()
            .enumerate()
            .filter(|&(_, y)| y != 0)
            .map(|(j, y)| (j as u64, y))
            .collect();
        all.sort_by(|a, b| {
            b.1.unsigned_abs()
                .cmp(&a.1.unsigned_abs())
                .then(a.0.cmp(&b.0))
        });
        all.truncate(k);
        Ok(all)
    }

    /// Per-row L2 norm of the rescaled row after subtracting `approx`.
    pub fn row_l2_after(&self, approx: &[(u64, i64)]) -> Result<Vec<f64>> {
        if self.failed {
            return Err(SketchError::Failed);
        }
        let width = self.width();
        Ok(self
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let mut vals: Vec<f64> = (0..width).map(|b| self.cell_value(r, b) as f64).collect();
                for &(j, y) in approx {
                    vals[row.bucket.eval(j) as usize] -= (row.sign.eval(j) * y) as f64;
                }
                vals.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect())
    }

    pub fn max_counter(&self) -> u64 {
        self.plus
            .iter()
            .chain(&self.minus)
            .copied()
            .max()
            .unwrap_or(0)
    }

    /// Bits needed for the largest stored counter.
    pub fn counter_bits(&self) -> u32 {
        64 - self.max_counter().leading_zeros()
    }

    /// Sampled units currently held across all cells.
    pub fn samples_stored(&self) -> u64 {
        self.plus.iter().chain(&self.minus).sum()
    }

    /// The bucket and sign hashes of row `r`.
    pub fn row_hashes(&self, r: usize) -> (&KWiseHash, &SignHash) {
        (&self.rows[r].bucket, &self.rows[r].sign)
    }
}

/// `v = 2 * median_row ‖row(cs2) - ŷ‖₂ + 5 eps l1`, where `ŷ` is the top-k of `cs1`.
///
/// Both tables must have seen the same stream with independent seeds.
pub fn estimate_tail_error(cs1: &CsssTable, cs2: &CsssTable, l1: f64) -> Result<f64> {
    let approx = cs1.topk(cs1.config.k)?;
    let mut norms = cs2.row_l2_after(&approx)?;
    Ok(2.0 * lower_median(&mut norms) + 5.0 * cs1.config.eps * l1)
}

const BLOB_MAGIC: &[u8; 4] = b"CSSS";
const BLOB_VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(SketchError::Parse {
                line: 0,
                reason: "truncated table blob".into(),
            });
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

impl CsssTable {
    /// Opaque versioned encoding, including generator state, so a restored
    /// table continues exactly as the original would.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        let c = &self.config;
        for v in [c.n, c.k as u64] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [c.eps, c.alpha, c.c_d, c.c_t, c.c_s] {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        for v in [
            self.p_exp as u64,
            self.position,
            self.failed as u64,
            self.sampling as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for row in &self.rows {
            for h in [&row.bucket, row.sign.hash()] {
                for &coef in h.coeffs() {
                    out.extend_from_slice(&coef.to_le_bytes());
                }
            }
        }
        for v in self.plus.iter().chain(&self.minus) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != BLOB_MAGIC {
            return Err(SketchError::Parse {
                line: 0,
                reason: "not a table blob".into(),
            });
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if version != BLOB_VERSION {
            return Err(SketchError::Parse {
                line: 0,
                reason: format!("unsupported table version {version}"),
            });
        }
        let n = r.u64()?;
        let k = r.u64()? as usize;
        let config = CsssConfig {
            n,
            k,
            eps: r.f64()?,
            alpha: r.f64()?,
            c_d: r.f64()?,
            c_t: r.f64()?,
            c_s: r.f64()?,
        };
        config.validate()?;
        let p_exp = r.u64()? as u32;
        let position = r.u64()?;
        let failed = r.u64()? != 0;
        let sampling = r.u64()? != 0;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let width = config.width() as u64;
        let mut rows = Vec::with_capacity(config.rows());
        for _ in 0..config.rows() {
            let bucket = (0..ROW_HASH_K)
                .map(|_| r.u64())
                .collect::<Result<Vec<_>>>()?;
            let sign = (0..ROW_HASH_K)
                .map(|_| r.u64())
                .collect::<Result<Vec<_>>>()?;
            rows.push(RowHash {
                bucket: KWiseHash::from_coeffs(bucket, width),
                sign: SignHash::from_hash(KWiseHash::from_coeffs(sign, 2)),
            });
        }
        let cells = config.rows() * config.width();
        let plus = (0..cells).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let minus = (0..cells).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if !r.buf.is_empty() {
            return Err(SketchError::Parse {
                line: 0,
                reason: "trailing bytes in table blob".into(),
            });
        }
        Ok(Self {
            config,
            rows,
            plus,
            minus,
            p_exp,
            position,
            failed,
            sampling,
            rng,
        })
    }
}

/// One exact Countsketch row: bucket `b` holds `sum_{h(i) = b} g(i) f_i`.
#[derive(Debug, Clone)]
pub struct PlainCsRow {
    h: KWiseHash,
    g: SignHash,
    buckets: Vec<i64>,
}

impl PlainCsRow {
    /// Row with a 2-wise bucket hash and 4-wise signs.
    pub fn new<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        Self::with_hashes(KWiseHash::new(2, width as u64, rng), SignHash::new(4, rng))
    }

    pub fn with_hashes(h: KWiseHash, g: SignHash) -> Self {
        let width = h.range() as usize;
        Self {
            h,
            g,
            buckets: vec![0; width],
        }
    }

    pub fn update(&mut self, u: Update) {
        self.buckets[self.h.eval(u.index) as usize] += self.g.eval(u.index) * u.delta;
    }

    /// This row's estimate `g(j) * A[h(j)]`.
    pub fn estimate(&self, j: u64) -> i64 {
        self.g.eval(j) * self.buckets[self.h.eval(j) as usize]
    }

    pub fn buckets(&self) -> &[i64] {
        &self.buckets
    }

    pub fn l2(&self) -> f64 {
        self.buckets
            .iter()
            .map(|&b| (b as f64) * (b as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Lower median of the per-row estimates of `j`.
pub fn plain_median(rows: &[PlainCsRow], j: u64) -> i64 {
    let mut v: Vec<i64> = rows.iter().map(|r| r.estimate(j)).collect();
    lower_median(&mut v)
}

/// Rate at which uniform sampling preserves one coordinate to within
/// `eps ‖f‖₁` with probability `1 - delta`: `alpha^2 ln(1/delta) / (eps^3 m)`.
pub fn preserving_rate(alpha: f64, eps: f64, delta: f64, m: u64) -> f64 {
    (alpha * alpha * (1.0 / delta).ln() / (eps.powi(3) * m as f64)).min(1.0)
}

/// Samples every unit update independently with probability `rate` and
/// returns the sampled frequency vector scaled by `1 / rate`.
pub fn sampled_frequencies<R: Rng + ?Sized>(
    updates: &[Update],
    rate: f64,
    rng: &mut R,
) -> HashMap<u64, f64> {
    let mut out: HashMap<u64, i64> = HashMap::new();
    for u in updates {
        let kept = binomial(u.magnitude(), rate, rng) as i64;
        if kept > 0 {
            *out.entry(u.index).or_default() += u.delta.signum() * kept;
        }
    }
    out.into_iter().map(|(i, v)| (i, v as f64 / rate)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{
        generate_stream, ExactState, GenSpec, Norm, Shape, StreamConfig, StreamKind,
    };
    use proptest::prelude::*;

    fn small_config() -> CsssConfig {
        CsssConfig::new(1 << 8, 4, 0.5, 2.0).unwrap()
    }

    #[test]
    fn derived_sizes() {
        let c = CsssConfig::new(1 << 12, 64, 0.1, 4.0).unwrap();
        assert_eq!(c.rows(), 24);
        assert_eq!(c.width(), 384);
        assert!((c.tail_param() - 412.0).abs() < 1e-9);
        let s = 16.0 / 0.01 * 412.0 * 412.0 * 12.0;
        assert!((c.sample_budget() - s).abs() / s < 1e-12);
    }

    #[test]
    fn empty_table_queries_zero() {
        let t = CsssTable::new(small_config(), 1).unwrap();
        assert!((0..256).all(|j| t.query(j).unwrap() == 0));
    }

    #[test]
    fn short_stream_is_exact() {
        let mut t = CsssTable::new(small_config(), 2).unwrap();
        for _ in 0..40 {
            t.update(Update::new(9, 1)).unwrap();
        }
        assert_eq!(t.p_exp(), 0);
        assert_eq!(t.query(9).unwrap(), 40);
        for r in 0..t.config().rows() {
            let (h, g) = t.row_hashes(r);
            let cell = r * t.config().width() + h.eval(9) as usize;
            let stored = if g.eval(9) > 0 {
                t.plus[cell]
            } else {
                t.minus[cell]
            };
            assert_eq!(stored, 40);
        }
    }

    #[test]
    fn halving_fires_at_boundaries() {
        let cfg = small_config().with_constants(2.0, 1.0, 1e-3).unwrap();
        let base = cfg.halving_base();
        let mut t = CsssTable::new(cfg, 3).unwrap();
        for step in 1..=8 * base {
            t.update(Update::new(step % 7, 1)).unwrap();
            let expected = match step {
                s if s <= 2 * base => 0,
                s if s <= 4 * base => 1,
                s if s <= 8 * base => 2,
                _ => 3,
            };
            assert_eq!(t.p_exp(), expected, "step {step}");
        }
        // A large update crossing several boundaries lands in the same state.
        let mut bulk = CsssTable::new(cfg, 3).unwrap();
        bulk.update(Update::new(0, (8 * base + 1) as i64)).unwrap();
        assert_eq!(bulk.p_exp(), 3);
        assert_eq!(bulk.position(), 8 * base + 1);
    }

    #[test]
    fn halving_halves_counters_in_expectation() {
        let cfg = small_config().with_constants(2.0, 1.0, 1e-3).unwrap();
        let base = cfg.halving_base();
        let trials = 10_000;
        let mut total = 0u64;
        for seed in 0..trials {
            let mut t = CsssTable::new(cfg, seed).unwrap();
            t.update(Update::new(5, (2 * base + 1) as i64)).unwrap();
            let (h, g) = t.row_hashes(0);
            let cell = h.eval(5) as usize;
            total += if g.eval(5) > 0 {
                t.plus[cell]
            } else {
                t.minus[cell]
            };
        }
        // Before the boundary the cell holds 2S; afterwards S + 1/2 in expectation.
        let mean = total as f64 / trials as f64;
        let expected = base as f64 + 0.5;
        let sd = (2.0 * base as f64 * 0.25 / trials as f64).sqrt();
        assert!(
            (mean - expected).abs() < 4.0 * sd + 1e-9,
            "{mean} vs {expected}"
        );
    }

    #[test]
    fn saturation_fails_the_table() {
        let cfg = small_config().with_constants(2.0, 1.0, 1e-9).unwrap();
        let mut t = CsssTable::unsampled(cfg, 4).unwrap();
        let bound = cfg.saturation_bound();
        let err = t.update(Update::new(1, bound as i64 + 1)).unwrap_err();
        assert_eq!(err, SketchError::Saturated { bound });
        assert!(t.is_failed());
        assert_eq!(t.query(1), Err(SketchError::Failed));
        assert_eq!(t.update(Update::new(1, 1)), Err(SketchError::Failed));
    }

    #[test]
    fn topk_returns_dominant_and_breaks_ties_by_index() {
        let mut t = CsssTable::new(small_config(), 5).unwrap();
        t.update(Update::new(3, 50)).unwrap();
        t.update(Update::new(10, 1)).unwrap();
        assert_eq!(t.topk(1).unwrap(), vec![(3, 50)]);

        let cfg = CsssConfig::new(1 << 4, 64, 0.5, 1.0).unwrap();
        let mut t = CsssTable::new(cfg, 6).unwrap();
        for i in [7, 2, 9] {
            t.update(Update::new(i, 4)).unwrap();
        }
        let top = t.topk(3).unwrap();
        if top.iter().all(|&(_, y)| y == 4) {
            assert_eq!(top.iter().map(|p| p.0).collect::<Vec<_>>(), vec![2, 7, 9]);
        }
    }

    #[test]
    fn exact_regime_topk_recovers_small_support() {
        let cfg = CsssConfig::new(1 << 10, 32, 0.5, 1.0).unwrap();
        let mut t = CsssTable::new(cfg, 8).unwrap();
        let items = [(4u64, 9i64), (100, -3), (513, 20), (77, 1)];
        for (i, v) in items {
            t.update(Update::new(i, v)).unwrap();
        }
        let mut got = t.topk(32).unwrap();
        got.sort();
        let mut want = items.to_vec();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn tail_error_of_zero_stream_is_zero() {
        let a = CsssTable::new(small_config(), 1).unwrap();
        let b = CsssTable::new(small_config(), 2).unwrap();
        assert_eq!(estimate_tail_error(&a, &b, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn sparse_stream_tail_estimate_below_upper_contract() {
        let cfg = CsssConfig::new(1 << 10, 8, 0.25, 1.0).unwrap();
        let mut a = CsssTable::new(cfg, 1).unwrap();
        let mut b = CsssTable::new(cfg, 2).unwrap();
        let mut l1 = 0.0;
        for (i, v) in [(1u64, 30i64), (50, 7), (900, 12)] {
            a.update(Update::new(i, v)).unwrap();
            b.update(Update::new(i, v)).unwrap();
            l1 += v as f64;
        }
        let v = estimate_tail_error(&a, &b, l1).unwrap();
        assert!(v <= 45.0 * (8f64).sqrt() * 0.25 * l1);
    }

    #[test]
    fn blob_round_trip_continues_identically() {
        let cfg = small_config().with_constants(2.0, 1.0, 1e-3).unwrap();
        let mut t = CsssTable::new(cfg, 12).unwrap();
        for i in 0..500u64 {
            t.update(Update::new(i % 17, 1 + (i % 3) as i64)).unwrap();
        }
        let mut restored = CsssTable::from_bytes(&t.to_bytes()).unwrap();
        for i in 0..500u64 {
            t.update(Update::new(i % 5, 2)).unwrap();
            restored.update(Update::new(i % 5, 2)).unwrap();
        }
        assert_eq!(t.to_bytes(), restored.to_bytes());
        let mut bad = t.to_bytes();
        bad[4] = 9;
        assert!(CsssTable::from_bytes(&bad).is_err());
        assert!(CsssTable::from_bytes(&t.to_bytes()[..20]).is_err());
    }

    #[test]
    fn sampling_lemma_rate_preserves_coordinates() {
        let spec = GenSpec {
            config: StreamConfig::new(64, 1 << 20, 1, StreamKind::GeneralTurnstile).unwrap(),
            target_alpha: 4.0,
            norm: Norm::L1,
            length: 50_000,
            shape: Shape::Zipf,
            seed: 3,
            support: Some(32),
            deletion_fraction: None,
        };
        let g = generate_stream(&spec).unwrap();
        let st = ExactState::replay(g.config, &g.updates).unwrap();
        let eps = 0.1;
        let rate = preserving_rate(4.0, eps, 0.01, st.mass());
        let mut rng = seeded_rng(4);
        let mut ok = 0;
        for _ in 0..100 {
            let s = sampled_frequencies(&g.updates, rate, &mut rng);
            let worst = (0..64u64)
                .map(|i| (s.get(&i).copied().unwrap_or(0.0) - st.frequency(i) as f64).abs())
                .fold(0.0, f64::max);
            if worst < eps * st.l1() as f64 {
                ok += 1;
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn unsampled_table_equals_plain_countsketch(
            seed in any::<u64>(),
            ups in prop::collection::vec((0u64..256, prop_oneof![-9i64..0, 1i64..9]), 1..120),
        ) {
            let cfg = small_config();
            let mut table = CsssTable::unsampled(cfg, seed).unwrap();
            let mut rows: Vec<PlainCsRow> = (0..cfg.rows())
                .map(|r| {
                    let (h, g) = table.row_hashes(r);
                    PlainCsRow::with_hashes(h.clone(), g.clone())
                })
                .collect();
            for (i, d) in ups {
                let u = Update::new(i, d);
                table.update(u).unwrap();
                rows.iter_mut().for_each(|r| r.update(u));
                prop_assert_eq!(table.query(i).unwrap(), plain_median(&rows, i));
            }
            for j in 0..256 {
                prop_assert_eq!(table.query(j).unwrap(), plain_median(&rows, j));
            }
        }

        #[test]
        fn counters_never_decrease_between_halvings(seed in any::<u64>(), len in 1usize..400) {
            let cfg = small_config().with_constants(2.0, 1.0, 1e-3).unwrap();
            let mut t = CsssTable::new(cfg, seed).unwrap();
            let mut prev = (t.plus.clone(), t.minus.clone(), t.p_exp());
            for i in 0..len as u64 {
                t.update(Update::new(i % 31, if i % 4 == 0 { -2 } else { 3 })).unwrap();
                if t.p_exp() == prev.2 {
                    prop_assert!(t.plus.iter().zip(&prev.0).all(|(a, b)| a >= b));
                    prop_assert!(t.minus.iter().zip(&prev.1).all(|(a, b)| a >= b));
                }
                prop_assert!(t.max_counter() <= cfg.saturation_bound());
                prev = (t.plus.clone(), t.minus.clone(), t.p_exp());
            }
        }
    }
}
