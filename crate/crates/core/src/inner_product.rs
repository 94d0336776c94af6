//! Additive-error inner products of two bounded-deletion streams.
//!
//! Each stream keeps a small Countsketch per live sampling interval. Item
//! identities are reduced modulo a random prime before hashing, so the
//! hashes only ever see `O(log s)`-bit identities. Both streams must hash with
//! the same [`IpSharedSeed`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::hashing::{
    bits_low_first, derive_seed, mod_reduce_streaming, sample_prime, seeded_rng, KWiseHash,
    SignHash, SketchRng,
};
use crate::l1_estimator::{sample_units, ClockKind, LevelScheduler};
use crate::stream::Update;

/// Independence of the bucket and sign hashes.
const IP_HASH_K: usize = 4;
/// Largest prime modulus: identities must stay inside the hashing field.
const PRIME_CAP: u64 = 1 << 61;
/// Largest sampling base.
const BASE_CAP: u64 = 1 << 62;
/// Counter magnitude that marks a sketch as saturated.
const COUNTER_LIMIT: i64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpConfig {
    pub n: u64,
    pub eps: f64,
    pub alpha: f64,
    /// Buckets `k = ceil(c_k / eps)`.
    pub c_k: f64,
    /// Base `s = next_pow2(c_s * alpha^2 * log^7 n / eps^10)`.
    pub c_s: f64,
    /// Replaces the formula for `s` when set; must be a power of two.
    pub base: Option<u64>,
}

impl IpConfig {
    pub fn new(n: u64, eps: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n,
            eps,
            alpha,
            c_k: 8.0,
            c_s: 1.0,
            base: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_base(mut self, s: u64) -> Result<Self> {
        self.base = Some(s);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(SketchError::param("n", "must be a power of two >= 2"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SketchError::param("eps", "must lie in (0, 1)"));
        }
        if !(self.alpha >= 1.0) {
            return Err(SketchError::param("alpha", "must be >= 1"));
        }
        if !(self.c_k > 0.0 && self.c_s > 0.0) {
            return Err(SketchError::param("constants", "must be positive"));
        }
        if let Some(s) = self.base {
            if s < 2 || !s.is_power_of_two() || s > BASE_CAP {
                return Err(SketchError::param(
                    "base",
                    format!("{s} is not a power of two in [2, 2^62]"),
                ));
            }
        }
        Ok(())
    }

    pub fn buckets(&self) -> usize {
        (self.c_k / self.eps).ceil() as usize
    }

    pub fn base(&self) -> u64 {
        if let Some(s) = self.base {
            return s;
        }
        let log_n = self.n.trailing_zeros() as f64;
        let raw = self.c_s * self.alpha * self.alpha * log_n.powi(7) / self.eps.powi(10);
        if raw >= BASE_CAP as f64 {
            BASE_CAP
        } else {
            (raw.ceil().max(2.0) as u64).next_power_of_two()
        }
    }

    /// Prime interval `[D, D^3]` with `D = 100 s^4`, clipped below `2^61`.
    pub fn prime_interval(&self) -> (u64, u64) {
        let d = 100.0 * (self.base() as f64).powi(4);
        let lo = d.min((PRIME_CAP / 4) as f64) as u64;
        let d3 = d.powi(3);
        let hi = if d3 >= (PRIME_CAP - 1) as f64 {
            PRIME_CAP - 1
        } else {
            d3 as u64
        };
        (lo, hi.max(lo + 1))
    }
}

/// Hashes of interval `r`, shared by both streams.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalHashes {
    pub r: u32,
    pub prime: u64,
    pub bucket: KWiseHash,
    pub sign: SignHash,
}

impl IntervalHashes {
    /// `i mod P_r`, computed from the bits of `i`.
    pub fn identity(&self, index: u64) -> u64 {
        mod_reduce_streaming(bits_low_first(index as u128), self.prime)
    }
}

/// Randomness shared by the two sketches; every interval's prime and hashes
/// are derived from `seed` on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct IpSharedSeed {
    config: IpConfig,
    seed: u64,
}

impl IpSharedSeed {
    pub fn new(config: IpConfig, seed: u64) -> Result<Arc<Self>> {
        config.validate()?;
        Ok(Arc::new(Self { config, seed }))
    }

    pub fn config(&self) -> &IpConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn interval(&self, r: u32) -> IntervalHashes {
        let mut rng = seeded_rng(derive_seed(self.seed, r as u64));
        let (lo, hi) = self.config.prime_interval();
        let prime = sample_prime(lo, hi, &mut rng)
            .expect("prime intervals [D, D^3] are never empty")
            .value;
        IntervalHashes {
            r,
            prime,
            bucket: KWiseHash::new(IP_HASH_K, self.config.buckets() as u64, &mut rng),
            sign: SignHash::new(IP_HASH_K, &mut rng),
        }
    }
}

/// Countsketch of the unscaled samples taken in one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSketch {
    pub hashes: IntervalHashes,
    pub counters: Vec<i64>,
    pub samples: u64,
}

#[derive(Debug, Clone)]
pub struct IpSketch {
    shared: Arc<IpSharedSeed>,
    scheduler: LevelScheduler<IntervalSketch>,
    rng: SketchRng,
    failed: bool,
}

impl IpSketch {
    /// `stream_seed` drives the sampling coins only; it should differ between
    /// the two streams.
    pub fn new(shared: &Arc<IpSharedSeed>, stream_seed: u64) -> Result<Self> {
        Ok(Self {
            shared: Arc::clone(shared),
            scheduler: LevelScheduler::new(shared.config.base(), ClockKind::Exact)?,
            rng: seeded_rng(stream_seed),
            failed: false,
        })
    }

    pub fn shared(&self) -> &Arc<IpSharedSeed> {
        &self.shared
    }

    pub fn position(&self) -> u64 {
        self.scheduler.position()
    }

    pub fn live(&self) -> impl Iterator<Item = &IntervalSketch> {
        self.scheduler.live().iter().map(|l| &l.payload)
    }

    pub fn update(&mut self, u: Update) -> Result<()> {
        if self.failed {
            return Err(SketchError::Saturated {
                bound: COUNTER_LIMIT as u64,
            });
        }
        let sign = u.delta.signum();
        let Self {
            shared,
            scheduler,
            rng,
            failed,
        } = self;
        let log_s = scheduler.log_s();
        let k = shared.config.buckets();
        scheduler.advance(
            u.magnitude(),
            rng,
            |r| IntervalSketch {
                hashes: shared.interval(r),
                counters: vec![0; k],
                samples: 0,
            },
            |level, count, rng| {
                let kept = sample_units(count, level.j * log_s, rng);
                if kept == 0 {
                    return;
                }
                let sk = &mut level.payload;
                debug_assert_eq!(sk.hashes.r, level.j);
                let id = sk.hashes.identity(u.index);
                let b = sk.hashes.bucket.eval(id) as usize;
                let c = &mut sk.counters[b];
                *c += sk.hashes.sign.eval(id) * sign * kept as i64;
                sk.samples += kept;
                if c.abs() > COUNTER_LIMIT {
                    *failed = true;
                }
            },
        );
        if self.failed {
            return Err(SketchError::Saturated {
                bound: COUNTER_LIMIT as u64,
            });
        }
        Ok(())
    }

    /// Bits of the widest live counter, sign excluded.
    pub fn counter_bits(&self) -> u32 {
        let max = self
            .live()
            .flat_map(|s| s.counters.iter())
            .map(|c| c.unsigned_abs())
            .max()
            .unwrap_or(0);
        64 - max.leading_zeros()
    }
}

/// Estimate of `<f, g>` from the oldest interval live in both sketches.
pub fn ip_estimate(f: &IpSketch, g: &IpSketch) -> Result<f64> {
    if !Arc::ptr_eq(&f.shared, &g.shared) && *f.shared != *g.shared {
        return Err(SketchError::SeedMismatch);
    }
    if f.failed || g.failed {
        return Err(SketchError::Failed);
    }
    let (fl, gl) = (f.scheduler.live(), g.scheduler.live());
    if fl.is_empty() || gl.is_empty() {
        // One of the streams is empty, so its vector is zero.
        return Ok(0.0);
    }
    let shared = fl
        .iter()
        .find_map(|a| gl.iter().find(|b| b.j == a.j).map(|b| (a, b)));
    let Some((a, b)) = shared else {
        return Err(SketchError::MismatchedIntervals {
            f_oldest: fl.first().map(|l| l.j),
            g_oldest: gl.first().map(|l| l.j),
        });
    };
    let dot: i128 = a
        .payload
        .counters
        .iter()
        .zip(&b.payload.counters)
        .map(|(&x, &y)| x as i128 * y as i128)
        .sum();
    let scale = f.scheduler.scale(a.j);
    Ok(scale * scale * dot as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{
        generate_stream, ExactState, GenSpec, Norm, Shape, StreamConfig, StreamKind,
    };

    fn sketch_pair(cfg: IpConfig, seed: u64) -> (IpSketch, IpSketch) {
        let shared = IpSharedSeed::new(cfg, seed).unwrap();
        (
            IpSketch::new(&shared, derive_seed(seed, 1)).unwrap(),
            IpSketch::new(&shared, derive_seed(seed, 2)).unwrap(),
        )
    }

    #[test]
    fn sizes() {
        let cfg = IpConfig::new(1 << 12, 0.25, 4.0).unwrap();
        assert_eq!(cfg.buckets(), 32);
        // 16 * 12^7 * 4^10 rounded up to a power of two.
        assert_eq!(cfg.base(), 1 << 50);
        let (lo, hi) = cfg.prime_interval();
        assert!(lo < hi && hi < PRIME_CAP);
        let small = cfg.with_base(4).unwrap();
        assert_eq!(small.prime_interval().0, 25_600);
        assert!(cfg.with_base(12).is_err());
    }

    #[test]
    fn same_item_gives_square() {
        let (mut f, mut g) = sketch_pair(IpConfig::new(1 << 12, 0.25, 1.0).unwrap(), 3);
        f.update(Update::new(1, 7)).unwrap();
        g.update(Update::new(1, 7)).unwrap();
        assert_eq!(ip_estimate(&f, &g).unwrap(), 49.0);
    }

    #[test]
    fn empty_stream_gives_zero() {
        let (mut f, g) = sketch_pair(IpConfig::new(1 << 12, 0.25, 1.0).unwrap(), 3);
        f.update(Update::new(1, 7)).unwrap();
        assert_eq!(ip_estimate(&f, &g).unwrap(), 0.0);
    }

    #[test]
    fn different_seeds_are_rejected() {
        let cfg = IpConfig::new(1 << 12, 0.25, 1.0).unwrap();
        let f = IpSketch::new(&IpSharedSeed::new(cfg, 1).unwrap(), 0).unwrap();
        let g = IpSketch::new(&IpSharedSeed::new(cfg, 2).unwrap(), 0).unwrap();
        assert_eq!(ip_estimate(&f, &g), Err(SketchError::SeedMismatch));
    }

    #[test]
    fn boundary_retires_old_interval() {
        let (mut f, _) = sketch_pair(
            IpConfig::new(1 << 12, 0.25, 1.0)
                .unwrap()
                .with_base(4)
                .unwrap(),
            0,
        );
        f.update(Update::new(0, 15)).unwrap();
        assert_eq!(f.live().map(|s| s.hashes.r).collect::<Vec<_>>(), vec![0, 1]);
        f.update(Update::new(0, 1)).unwrap();
        assert_eq!(f.live().map(|s| s.hashes.r).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn mismatched_lengths_are_reported() {
        let (mut f, mut g) = sketch_pair(
            IpConfig::new(1 << 12, 0.25, 1.0)
                .unwrap()
                .with_base(4)
                .unwrap(),
            0,
        );
        f.update(Update::new(0, 3)).unwrap();
        g.update(Update::new(0, 1_000)).unwrap();
        assert!(matches!(
            ip_estimate(&f, &g),
            Err(SketchError::MismatchedIntervals {
                f_oldest: Some(0),
                g_oldest: Some(3)
            })
        ));
    }

    #[test]
    fn unit_rate_matches_plain_countsketch() {
        let cfg = IpConfig::new(1 << 12, 0.25, 1.0).unwrap();
        let (mut f, mut g) = sketch_pair(cfg, 11);
        let h = IpSharedSeed::new(cfg, 11).unwrap().interval(0);
        assert!(h.prime > 1 << 12);
        let (mut a, mut b) = (vec![0i64; cfg.buckets()], vec![0i64; cfg.buckets()]);
        for i in 0..300u64 {
            let (uf, ug) = (Update::new(i % 97, 3), Update::new((i * 7) % 101, -2));
            f.update(uf).unwrap();
            g.update(ug).unwrap();
            a[h.bucket.eval(uf.index) as usize] += h.sign.eval(uf.index) * uf.delta;
            b[h.bucket.eval(ug.index) as usize] += h.sign.eval(ug.index) * ug.delta;
        }
        let plain: i64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(ip_estimate(&f, &g).unwrap(), plain as f64);
    }

    #[test]
    fn samples_per_interval_stay_below_two_s_squared() {
        let s = 16u64;
        let cfg = IpConfig::new(1 << 12, 0.25, 1.0)
            .unwrap()
            .with_base(s)
            .unwrap();
        for seed in 0..20 {
            let (mut f, _) = sketch_pair(cfg, seed);
            for i in 0..2_000u64 {
                f.update(Update::new(i % 50, 40)).unwrap();
                assert!(f.live().all(|sk| sk.samples <= 2 * s * s));
            }
        }
    }

    #[test]
    fn identities_separate_modulo_prime() {
        let cfg = IpConfig::new(1 << 40, 0.25, 1.0)
            .unwrap()
            .with_base(4)
            .unwrap();
        let mut rng = seeded_rng(5);
        let mut separated = 0;
        for trial in 0..100 {
            let h = IpSharedSeed::new(cfg, trial).unwrap().interval(1);
            let ids: Vec<u64> = (0..64)
                .map(|_| rand::Rng::random_range(&mut rng, 0..1u64 << 40))
                .collect();
            let mut reduced: Vec<u64> = ids.iter().map(|&i| h.identity(i)).collect();
            reduced.sort_unstable();
            reduced.dedup();
            let mut distinct = ids.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if reduced.len() == distinct.len() {
                separated += 1;
            }
        }
        assert!(separated >= 99, "{separated}/100");
    }

    #[test]
    fn random_pairs_within_eps() {
        let cfg = StreamConfig::new(1 << 12, 1 << 20, 1, StreamKind::StrictTurnstile).unwrap();
        let ip = IpConfig::new(1 << 12, 0.25, 4.0)
            .unwrap()
            .with_base(1 << 6)
            .unwrap();
        let mut good = 0;
        for seed in 0..40 {
            let sf = generate_stream(&GenSpec::new(
                cfg,
                4.0,
                Norm::L1,
                20_000,
                Shape::Zipf,
                2 * seed,
            ))
            .unwrap();
            let sg = generate_stream(&GenSpec::new(
                cfg,
                4.0,
                Norm::L1,
                20_000,
                Shape::Zipf,
                2 * seed + 1,
            ))
            .unwrap();
            let (of, og) = (
                ExactState::replay(cfg, &sf.updates).unwrap(),
                ExactState::replay(cfg, &sg.updates).unwrap(),
            );
            let (mut f, mut g) = sketch_pair(ip, seed);
            sf.updates.iter().for_each(|&u| f.update(u).unwrap());
            sg.updates.iter().for_each(|&u| g.update(u).unwrap());
            let est = ip_estimate(&f, &g).unwrap();
            let bound = 0.25 * of.l1() as f64 * og.l1() as f64;
            if (est - of.inner(&og) as f64).abs() <= bound {
                good += 1;
            }
        }
        assert!(good >= 30, "{good}/40");
    }
}
