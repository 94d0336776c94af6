//! Sampling in overlapping, exponentially growing windows.
//!
//! Level `j` covers positions `[s^j, s^{j+2})` and samples at rate `s^-j`.
//! At most two levels are live at any time; a level is dropped for good once
//! the clock leaves its window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MorrisCounter;
use crate::error::{Result, SketchError};

/// Source of the position used to decide which levels are live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockKind {
    /// Morris counter estimate; `O(log log m)` bits.
    Morris,
    /// Exact unit count.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level<P> {
    pub j: u32,
    /// Unit position of the first update the level saw.
    pub birth: u64,
    pub payload: P,
}

#[derive(Debug, Clone)]
pub struct LevelScheduler<P> {
    log_s: u32,
    kind: ClockKind,
    morris: MorrisCounter,
    position: u64,
    levels: Vec<Level<P>>,
    retired_below: u32,
}

impl<P> LevelScheduler<P> {
    /// `s` must be a power of two, at least 2.
    pub fn new(s: u64, kind: ClockKind) -> Result<Self> {
        if s < 2 || !s.is_power_of_two() {
            return Err(SketchError::param(
                "s",
                format!("{s} is not a power of two >= 2"),
            ));
        }
        Ok(Self {
            log_s: s.trailing_zeros(),
            kind,
            morris: MorrisCounter::new(),
            position: 0,
            levels: Vec::with_capacity(3),
            retired_below: 0,
        })
    }

    pub fn s(&self) -> u64 {
        1 << self.log_s
    }

    pub fn log_s(&self) -> u32 {
        self.log_s
    }

    /// Exact number of units processed.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn morris(&self) -> &MorrisCounter {
        &self.morris
    }

    /// Sampling rate `s^-j`.
    pub fn rate(&self, j: u32) -> f64 {
        0.5f64.powi((j * self.log_s) as i32)
    }

    /// `2^{log_s * j}` as a float; the inverse sampling rate.
    pub fn scale(&self, j: u32) -> f64 {
        2f64.powi((j * self.log_s) as i32)
    }

    pub fn live(&self) -> &[Level<P>] {
        &self.levels
    }

    pub fn live_mut(&mut self) -> &mut [Level<P>] {
        &mut self.levels
    }

    /// The live level that has existed longest.
    pub fn oldest(&self) -> Option<&Level<P>> {
        self.levels.first()
    }

    /// `s^q`, saturating.
    fn power(&self, q: u32) -> u128 {
        let bits = q as u64 * self.log_s as u64;
        if bits >= 127 {
            u128::MAX
        } else {
            1u128 << bits
        }
    }

    fn contains(&self, j: u32, clock: u128) -> bool {
        self.power(j) <= clock && clock < self.power(j + 2)
    }

    /// Retires levels whose window no longer holds `clock` and spawns the
    /// ones that now do.
    fn refresh(&mut self, clock: u128, make: &mut impl FnMut(u32) -> P) {
        let live: Vec<u32> = {
            // Largest j with s^j <= clock; the candidates are j and j - 1.
            let top = if clock == 0 {
                None
            } else {
                Some((127 - clock.leading_zeros()) / self.log_s)
            };
            top.map(|t| {
                [t.checked_sub(1), Some(t)]
                    .into_iter()
                    .flatten()
                    .filter(|&j| self.contains(j, clock))
                    .collect()
            })
            .unwrap_or_default()
        };
        self.levels.retain(|l| live.contains(&l.j));
        // The clock never moves backwards, so anything below the lowest live
        // level has been retired for good.
        if let Some(&low) = live.first() {
            self.retired_below = self.retired_below.max(low);
        }
        for j in live {
            if j >= self.retired_below && !self.levels.iter().any(|l| l.j == j) {
                self.levels.push(Level {
                    j,
                    birth: self.position + 1,
                    payload: make(j),
                });
            }
        }
        self.levels.sort_by_key(|l| l.j);
    }

    /// Advances by `units` unit updates. `make(j)` builds the payload of a
    /// newly live level; `feed(level, count, rng)` is called for each live
    /// level with the number of consecutive units it sees.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        units: u64,
        rng: &mut R,
        mut make: impl FnMut(u32) -> P,
        mut feed: impl FnMut(&mut Level<P>, u64, &mut R),
    ) {
        let mut remaining = units;
        match self.kind {
            ClockKind::Exact => {
                while remaining > 0 {
                    let clock = self.position as u128 + 1;
                    self.refresh(clock, &mut make);
                    // Windows only change at powers of s.
                    let q = (127 - clock.leading_zeros()) / self.log_s + 1;
                    let next = self.power(q);
                    let chunk = remaining.min((next - clock).min(u64::MAX as u128) as u64);
                    for l in self.levels.iter_mut() {
                        feed(l, chunk, rng);
                    }
                    self.position += chunk;
                    remaining -= chunk;
                }
            }
            ClockKind::Morris => {
                while remaining > 0 {
                    let skip = self.morris.skip(rng);
                    let quiet = skip.min(remaining);
                    if quiet > 0 {
                        for l in self.levels.iter_mut() {
                            feed(l, quiet, rng);
                        }
                        self.position += quiet;
                        remaining -= quiet;
                    }
                    if remaining == 0 {
                        break;
                    }
                    self.morris.bump();
                    self.refresh(self.morris.estimate() as u128, &mut make);
                    for l in self.levels.iter_mut() {
                        feed(l, 1, rng);
                    }
                    self.position += 1;
                    remaining -= 1;
                }
            }
        }
    }
}
