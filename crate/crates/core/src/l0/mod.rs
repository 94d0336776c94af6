//! `(1 ± ε)` estimation of `||f||_0` on bounded-deletion streams.
//!
//! [`L0Estimator`] dispatches between three readings of the same pass:
//! an exact count for tiny supports, a single collapsed balls-in-bins row for
//! small ones, and a subsampled matrix whose rows are kept only inside a
//! window that follows a rough running estimate of the support size.

mod const_l0;
mod estimator;
mod matrix;
mod rough;
mod small;

pub use const_l0::{ConstL0, CONST_L0_THRESHOLD};
pub use estimator::{l0_full, L0Branch, L0Estimate, L0Estimator, L0Full};
pub use matrix::{invert_occupancy, L0Matrix};
pub use rough::RoughF0;
pub use small::{SmallF0, SmallL0, SmallResult};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SketchError};
use crate::stream::{StreamConfig, StreamKind};

/// 0-based position of the lowest set bit of `x`; `lsb(0) = log_n`.
pub fn lsb(x: u64, log_n: u32) -> u32 {
    if x == 0 {
        log_n
    } else {
        x.trailing_zeros().min(log_n)
    }
}

/// Largest prime modulus used for cell residues.
const PRIME_CAP: u64 = 1 << 61;

/// Prime interval `[d, d^3]`, clipped below `2^61`.
pub(crate) fn prime_interval(d: f64) -> (u64, u64) {
    let lo = d.clamp(3.0, (PRIME_CAP / 4) as f64) as u64;
    let d3 = d.powi(3);
    let hi = if d3 >= (PRIME_CAP - 1) as f64 {
        PRIME_CAP - 1
    } else {
        d3 as u64
    };
    (lo, hi.max(lo + 1))
}

/// `delta mod p` as a residue in `[0, p)`.
#[inline]
pub(crate) fn residue(delta: i64, p: u64) -> u64 {
    // p < 2^61, so the i64 remainder is exact.
    delta.rem_euclid(p as i64) as u64
}

/// `delta * w mod p`, skipping the wide product for unit deltas.
#[inline]
pub(crate) fn scaled_residue(delta: i64, w: u64, p: u64) -> u64 {
    match delta {
        1 => w,
        -1 => p - w,
        _ => mul_mod(residue(delta, p), w, p),
    }
}

#[inline]
pub(crate) fn add_mod(a: u64, b: u64, p: u64) -> u64 {
    let s = a + b;
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
pub(crate) fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

/// Sizing of every part of an [`L0Estimator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0Config {
    pub n: u64,
    pub eps: f64,
    pub alpha: f64,
    /// Stream mass bound `m` and largest `|delta|` `M`; size the primes.
    pub m_max: u64,
    pub max_delta: u64,
    pub kind: StreamKind,
    /// Bins per row: `K = next_pow2(c_k / eps^2)`.
    pub c_k: f64,
    /// Independent repetitions whose median is reported.
    pub reps: usize,
    /// Hashes kept by the rough tracker.
    pub kmv_k: usize,
}

impl L0Config {
    pub fn new(stream: &StreamConfig, eps: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n: stream.n,
            eps,
            alpha,
            m_max: stream.m_max,
            max_delta: stream.max_delta,
            kind: stream.kind,
            c_k: 256.0,
            reps: 3,
            kmv_k: 32,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !self.n.is_power_of_two() {
            return Err(SketchError::param("n", "must be a power of two >= 4"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SketchError::param("eps", "must lie in (0, 1)"));
        }
        if !(self.alpha >= 1.0) {
            return Err(SketchError::param("alpha", "must be >= 1"));
        }
        if !(self.c_k >= 1.0) || self.reps == 0 || self.kmv_k < 2 {
            return Err(SketchError::param(
                "constants",
                "c_k >= 1, reps >= 1 and kmv_k >= 2 required",
            ));
        }
        if self.k() > 1 << 20 {
            return Err(SketchError::param("c_k", "more than 2^20 bins per row"));
        }
        Ok(())
    }

    pub fn log_n(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// `log2(m M)`, at least 1.
    pub fn log_mm(&self) -> f64 {
        ((self.m_max.max(1) as f64) * (self.max_delta.max(1) as f64))
            .log2()
            .max(1.0)
    }

    /// Bins per matrix row.
    pub fn k(&self) -> u64 {
        ((self.c_k / (self.eps * self.eps)).ceil() as u64).next_power_of_two()
    }

    /// `max(4, ceil(ln(1/eps) / ln ln(1/eps)))`.
    pub fn k_ind(&self) -> usize {
        let l = (1.0 / self.eps).ln();
        let ll = l.ln();
        if ll <= 0.0 {
            4
        } else {
            ((l / ll).ceil() as usize).max(4)
        }
    }

    /// Row window half-width `ceil(2 log2(4 alpha / eps))`.
    pub fn window(&self) -> u32 {
        half_width(self.alpha, self.eps)
    }

    /// Exact-count threshold `c = ceil(8 log n / log log n)`.
    pub fn small_threshold(&self) -> u64 {
        let log_n = self.log_n() as f64;
        (8.0 * log_n / log_n.log2().max(1.0)).ceil() as u64
    }

    /// Lower clamp of the rough tracker, `8 log n / log log n`.
    pub fn l0_floor(&self) -> f64 {
        let log_n = self.log_n() as f64;
        8.0 * log_n / log_n.log2().max(1.0)
    }

    /// Matrix prime interval, `D = 100 K log(mM)`.
    pub fn matrix_primes(&self) -> (u64, u64) {
        prime_interval(100.0 * self.k() as f64 * self.log_mm())
    }

    /// Lowest row of the permanent band: rows at or above it receive at most
    /// `K / 16` items in expectation even when every index is in the support.
    pub fn band_floor(&self) -> u32 {
        let lg = |x: u64| x.trailing_zeros() as i64;
        (lg(self.n) + 5 - lg(self.k())).clamp(0, self.log_n() as i64) as u32
    }
}

pub(crate) fn half_width(alpha: f64, eps: f64) -> u32 {
    (2.0 * (4.0 * alpha / eps).log2()).ceil().max(1.0) as u32
}
