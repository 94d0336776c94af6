//! Shared randomness: seed derivation, k-wise independent polynomial hashing
//! over the Mersenne field `2^61 - 1`, random primes, streamed reduction
//! modulo a prime and discretized Cauchy variates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Result, SketchError};

/// Generator used by every sketch.
pub type SketchRng = ChaCha8Rng;

/// The field modulus `2^61 - 1`.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Independence used by [`stable_draw`].
pub const DEFAULT_STABLE_K: usize = 8;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the component labelled `tag`.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn seeded_rng(seed: u64) -> SketchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn reduce61(x: u128) -> u64 {
    let lo = (x as u64) & MERSENNE_61;
    let hi = (x >> 61) as u64;
    let mut r = lo + (hi & MERSENNE_61) + ((x >> 122) as u64);
    while r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

#[inline]
pub(crate) fn mulmod61(a: u64, b: u64) -> u64 {
    reduce61(a as u128 * b as u128)
}

/// Degree `k - 1` polynomial with random coefficients over `GF(2^61 - 1)`,
/// reduced to `[0, range)`.
///
/// Domain elements must be below `2^61 - 1`. Power-of-two ranges are
/// reduced by masking; other ranges by remainder, whose bias is below
/// `range / 2^61`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KWiseHash {
    coeffs: Vec<u64>,
    range: u64,
}

impl KWiseHash {
    pub fn new<R: Rng + ?Sized>(k: usize, range: u64, rng: &mut R) -> Self {
        assert!(k >= 1, "independence must be at least 1");
        assert!(range >= 1, "range must be positive");
        let coeffs = (0..k).map(|_| rng.random_range(0..MERSENNE_61)).collect();
        Self { coeffs, range }
    }

    pub fn from_seed(k: usize, range: u64, seed: u64) -> Self {
        Self::new(k, range, &mut seeded_rng(seed))
    }

    /// Builds a hash from explicit coefficients, constant term first.
    pub fn from_coeffs(coeffs: Vec<u64>, range: u64) -> Self {
        assert!(!coeffs.is_empty() && range >= 1);
        assert!(coeffs.iter().all(|&c| c < MERSENNE_61));
        Self { coeffs, range }
    }

    pub fn k(&self) -> usize {
        self.coeffs.len()
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    /// Polynomial value in `[0, 2^61 - 1)`.
    #[inline]
    pub fn eval_field(&self, x: u64) -> u64 {
        debug_assert!(x < MERSENNE_61);
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = mulmod61(acc, x) + c;
            if acc >= MERSENNE_61 {
                acc -= MERSENNE_61;
            }
        }
        acc
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        let v = self.eval_field(x);
        if self.range.is_power_of_two() {
            v & (self.range - 1)
        } else {
            v % self.range
        }
    }

    /// Value mapped to the open unit interval.
    #[inline]
    pub fn eval_unit(&self, x: u64) -> f64 {
        (self.eval_field(x) as f64 + 0.5) / MERSENNE_61 as f64
    }
}

/// `±1` hash built on a k-wise family with range 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignHash(KWiseHash);

impl SignHash {
    pub fn new<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        Self(KWiseHash::new(k, 2, rng))
    }

    pub fn from_hash(h: KWiseHash) -> Self {
        assert_eq!(h.range(), 2, "sign hashes have range 2");
        Self(h)
    }

    pub fn hash(&self) -> &KWiseHash {
        &self.0
    }

    #[inline]
    pub fn eval(&self, x: u64) -> i64 {
        if self.0.eval(x) == 0 {
            1
        } else {
            -1
        }
    }
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if n % p == 0 {
            return n == p;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut r = 1u64;
        b %= n;
        while e > 0 {
            if e & 1 == 1 {
                r = mulmod(r, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        r
    };
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in SMALL {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A prime drawn from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomPrime {
    pub lo: u64,
    pub hi: u64,
    pub value: u64,
}

/// Widest interval scanned exhaustively when rejection sampling stalls.
const PRIME_SCAN_LIMIT: u64 = 1 << 22;

/// Uniformly random prime in `[lo, hi]` by rejection sampling.
///
/// Falls back to enumerating the interval when it is narrow enough, so an
/// empty interval is reported rather than looping.
pub fn sample_prime<R: Rng + ?Sized>(lo: u64, hi: u64, rng: &mut R) -> Result<RandomPrime> {
    if lo < 2 || hi < lo {
        return Err(SketchError::param(
            "prime interval",
            format!("[{lo}, {hi}] is invalid"),
        ));
    }
    // Prime density near hi is about 1/ln(hi); 40 ln(hi) draws miss with probability e^-40.
    let attempts = 40 * ((hi as f64).ln().ceil() as u64 + 1);
    for _ in 0..attempts {
        let x = rng.random_range(lo..=hi);
        if is_prime(x) {
            return Ok(RandomPrime { lo, hi, value: x });
        }
    }
    if hi - lo <= PRIME_SCAN_LIMIT {
        let primes: Vec<u64> = (lo..=hi).filter(|&x| is_prime(x)).collect();
        if primes.is_empty() {
            return Err(SketchError::EmptyPrimeInterval { lo, hi });
        }
        let value = primes[rng.random_range(0..primes.len())];
        return Ok(RandomPrime { lo, hi, value });
    }
    Err(SketchError::EmptyPrimeInterval { lo, hi })
}

/// Reduces an integer modulo `p` from its bits, low-order first, holding only
/// the running residue and the running power `2^t mod p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamingReducer {
    p: u64,
    acc: u64,
    pow: u64,
}

impl StreamingReducer {
    pub fn new(p: u64) -> Self {
        assert!((2..1 << 62).contains(&p), "modulus must lie in [2, 2^62)");
        Self {
            p,
            acc: 0,
            pow: 1 % p,
        }
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if bit {
            self.acc += self.pow;
            if self.acc >= self.p {
                self.acc -= self.p;
            }
        }
        self.pow <<= 1;
        if self.pow >= self.p {
            self.pow -= self.p;
        }
    }

    pub fn residue(&self) -> u64 {
        self.acc
    }
}

/// `x mod p` where `x` is given by its bits, low-order first.
pub fn mod_reduce_streaming<I: IntoIterator<Item = bool>>(bits: I, p: u64) -> u64 {
    let mut r = StreamingReducer::new(p);
    for b in bits {
        r.push(b);
    }
    r.residue()
}

/// Bits of `x` from the lowest up to its highest set bit.
pub fn bits_low_first(x: u128) -> impl Iterator<Item = bool> {
    let len = 128 - x.leading_zeros();
    (0..len).map(move |i| (x >> i) & 1 == 1)
}

/// A Cauchy variate `tan(theta)` rounded to a multiple of `delta_prec`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableVariate {
    pub theta: f64,
    /// `units * delta_prec`.
    pub value: f64,
    /// Rounded value in multiples of `delta_prec`.
    pub units: i128,
}

impl StableVariate {
    pub fn from_theta(theta: f64, delta_prec: f64) -> Self {
        debug_assert!(delta_prec > 0.0);
        let units = (theta.tan() / delta_prec).round() as i128;
        Self {
            theta,
            value: units as f64 * delta_prec,
            units,
        }
    }
}

/// Cauchy entries indexed by item, k-wise independent across items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableFamily {
    angle: KWiseHash,
    delta_prec: f64,
}

impl StableFamily {
    pub fn new<R: Rng + ?Sized>(k: usize, delta_prec: f64, rng: &mut R) -> Self {
        assert!(delta_prec > 0.0, "precision must be positive");
        Self {
            angle: KWiseHash::new(k, MERSENNE_61, rng),
            delta_prec,
        }
    }

    pub fn from_seed(k: usize, delta_prec: f64, seed: u64) -> Self {
        Self::new(k, delta_prec, &mut seeded_rng(seed))
    }

    pub fn delta_prec(&self) -> f64 {
        self.delta_prec
    }

    #[inline]
    pub fn draw(&self, index: u64) -> StableVariate {
        let theta = PI * (self.angle.eval_unit(index) - 0.5);
        StableVariate::from_theta(theta, self.delta_prec)
    }
}

/// Reproducible Cauchy draw for `(seed, index)`.
pub fn stable_draw(seed: u64, index: u64, delta_prec: f64) -> StableVariate {
    StableFamily::from_seed(DEFAULT_STABLE_K, delta_prec, seed).draw(index)
}
