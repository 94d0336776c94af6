use std::collections::HashMap;

use super::{Alpha, Norm, StreamConfig, StreamKind, Update};
use crate::error::{Result, SketchError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Coord {
    f: i64,
    ins: u64,
    del: u64,
}

/// Exact replay of a stream: frequency, insertion and deletion totals per
/// coordinate. Ground truth for every test.
///
/// Storage is sparse so universes far larger than the touched set are cheap.
#[derive(Debug, Clone)]
pub struct ExactState {
    config: StreamConfig,
    coords: HashMap<u64, Coord>,
    updates: u64,
    mass: u64,
}

impl ExactState {
    pub fn new(config: StreamConfig) -> Self {
        Self {
            config,
            coords: HashMap::new(),
            updates: 0,
            mass: 0,
        }
    }

    /// Replays `updates` from the zero vector.
    pub fn replay(config: StreamConfig, updates: &[Update]) -> Result<Self> {
        let mut st = Self::new(config);
        for u in updates {
            st.apply(*u)?;
        }
        Ok(st)
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    /// Applies one update. A rejected update leaves the state untouched.
    pub fn apply(&mut self, u: Update) -> Result<()> {
        self.config.check(&u)?;
        let current = self.coords.get(&u.index).copied().unwrap_or_default();
        let f = current
            .f
            .checked_add(u.delta)
            .ok_or_else(|| SketchError::param("delta", "frequency overflow"))?;
        if self.config.kind == StreamKind::StrictTurnstile && f < 0 {
            return Err(SketchError::StrictViolation {
                index: u.index,
                delta: u.delta,
                result: f,
            });
        }
        let mut next = current;
        next.f = f;
        if u.delta > 0 {
            next.ins += u.magnitude();
        } else {
            next.del += u.magnitude();
        }
        self.coords.insert(u.index, next);
        self.updates += 1;
        self.mass += u.magnitude();
        Ok(())
    }

    /// Number of updates applied.
    pub fn t(&self) -> u64 {
        self.updates
    }

    /// Unit-expanded stream length `m = sum |delta|`.
    pub fn mass(&self) -> u64 {
        self.mass
    }

    pub fn frequency(&self, i: u64) -> i64 {
        self.coords.get(&i).map_or(0, |c| c.f)
    }

    pub fn insertions(&self, i: u64) -> u64 {
        self.coords.get(&i).map_or(0, |c| c.ins)
    }

    pub fn deletions(&self, i: u64) -> u64 {
        self.coords.get(&i).map_or(0, |c| c.del)
    }

    /// Nonzero frequencies sorted by index.
    pub fn frequencies(&self) -> Vec<(u64, i64)> {
        let mut v: Vec<(u64, i64)> = self
            .coords
            .iter()
            .filter(|(_, c)| c.f != 0)
            .map(|(&i, c)| (i, c.f))
            .collect();
        v.sort_unstable_by_key(|&(i, _)| i);
        v
    }

    /// Support of `f`, sorted.
    pub fn support(&self) -> Vec<u64> {
        self.frequencies().into_iter().map(|(i, _)| i).collect()
    }

    pub fn l1(&self) -> u64 {
        self.coords.values().map(|c| c.f.unsigned_abs()).sum()
    }

    pub fn l0(&self) -> u64 {
        self.coords.values().filter(|c| c.f != 0).count() as u64
    }

    /// Distinct items ever updated.
    pub fn f0(&self) -> u64 {
        self.coords.len() as u64
    }

    /// Signed sum of all frequencies.
    pub fn sum(&self) -> i64 {
        self.coords.values().map(|c| c.f).sum()
    }

    pub fn l2(&self) -> f64 {
        self.coords
            .values()
            .map(|c| (c.f as f64) * (c.f as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖I + D‖_p / ‖f‖_p`.
    pub fn alpha_lp(&self, p: Norm) -> Alpha {
        match p {
            Norm::L1 => Alpha::ratio(self.mass as u128, self.l1() as u128),
            Norm::L0 => Alpha::ratio(self.f0() as u128, self.l0() as u128),
        }
    }

    /// Unit-update form `m / ‖f‖₁`. Coincides with the L1 α because
    /// `‖I + D‖₁ = m`.
    pub fn alpha_unit(&self) -> Alpha {
        Alpha::ratio(self.mass as u128, self.l1() as u128)
    }

    /// `max_i (I_i + D_i) / |f_i|` over touched coordinates.
    pub fn strong_alpha(&self) -> Alpha {
        self.coords
            .values()
            .map(|c| Alpha::ratio((c.ins + c.del) as u128, c.f.unsigned_abs() as u128))
            .max()
            .unwrap_or(Alpha::ONE)
    }

    /// `Err_k`: L2 norm of `f` with its `k` largest-magnitude entries removed.
    pub fn tail_error(&self, k: usize) -> f64 {
        let mut mags: Vec<u64> = self
            .coords
            .values()
            .map(|c| c.f.unsigned_abs())
            .filter(|&a| a > 0)
            .collect();
        mags.sort_unstable_by(|a, b| b.cmp(a));
        mags.iter()
            .skip(k)
            .map(|&a| (a as f64) * (a as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// `⟨f, g⟩`, computed in `i128`.
    pub fn inner(&self, other: &ExactState) -> i128 {
        let (small, large) = if self.coords.len() <= other.coords.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .coords
            .iter()
            .map(|(&i, c)| c.f as i128 * large.frequency(i) as i128)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(kind: StreamKind) -> StreamConfig {
        StreamConfig::new(64, 1 << 20, 1 << 10, kind).unwrap()
    }

    #[test]
    fn single_insertion() {
        let mut st = ExactState::new(cfg(StreamKind::StrictTurnstile));
        st.apply(Update::new(3, 5)).unwrap();
        assert_eq!(
            (st.frequency(3), st.insertions(3), st.deletions(3)),
            (5, 5, 0)
        );
    }

    #[test]
    fn exact_cancellation() {
        let mut st = ExactState::new(cfg(StreamKind::StrictTurnstile));
        st.apply(Update::new(3, 5)).unwrap();
        st.apply(Update::new(3, -5)).unwrap();
        assert_eq!((st.frequency(3), st.deletions(3)), (0, 5));
    }

    #[test]
    fn strict_rejects_negative_prefix() {
        let mut st = ExactState::new(cfg(StreamKind::StrictTurnstile));
        let err = st.apply(Update::new(3, -1)).unwrap_err();
        assert!(matches!(err, SketchError::StrictViolation { index: 3, .. }));
        assert_eq!(st.t(), 0);
        assert_eq!(st.frequency(3), 0);
    }

    #[test]
    fn alpha_examples() {
        let mut st = ExactState::new(cfg(StreamKind::InsertionOnly));
        for i in 0..10 {
            st.apply(Update::new(i, 1 + i as i64)).unwrap();
        }
        assert_eq!(st.alpha_lp(Norm::L1), Alpha::ONE);
        assert_eq!(st.alpha_lp(Norm::L0), Alpha::ONE);
        assert_eq!(st.strong_alpha(), Alpha::ONE);

        let mut st = ExactState::new(cfg(StreamKind::StrictTurnstile));
        st.apply(Update::new(0, 5)).unwrap();
        st.apply(Update::new(0, -4)).unwrap();
        assert_eq!(st.alpha_lp(Norm::L1), Alpha::ratio(9, 1));
        st.apply(Update::new(0, -1)).unwrap();
        assert_eq!(st.alpha_lp(Norm::L1), Alpha::Infinite);
        assert_eq!(st.strong_alpha(), Alpha::Infinite);
    }

    #[test]
    fn strong_alpha_per_coordinate() {
        let mut st = ExactState::new(cfg(StreamKind::StrictTurnstile));
        for i in 0..8 {
            st.apply(Update::new(i, 3)).unwrap();
            st.apply(Update::new(i, -2)).unwrap();
        }
        assert_eq!(st.strong_alpha(), Alpha::ratio(5, 1));
    }

    #[test]
    fn empty_stream_alpha_is_one() {
        let st = ExactState::new(cfg(StreamKind::GeneralTurnstile));
        assert_eq!(st.alpha_lp(Norm::L1), Alpha::ONE);
        assert_eq!(st.alpha_lp(Norm::L0), Alpha::ONE);
        assert_eq!(st.strong_alpha(), Alpha::ONE);
    }

    #[test]
    fn tail_error_drops_largest() {
        let mut st = ExactState::new(cfg(StreamKind::GeneralTurnstile));
        for (i, v) in [(0, 10), (1, -7), (2, 3), (3, 4)] {
            st.apply(Update::new(i, v)).unwrap();
        }
        assert!((st.tail_error(2) - 5.0).abs() < 1e-12);
        assert_eq!(st.tail_error(4), 0.0);
    }

    fn updates() -> impl Strategy<Value = Vec<(u64, i64)>> {
        prop::collection::vec((0u64..64, prop_oneof![-20i64..0, 1i64..20]), 0..200)
    }

    proptest! {
        #[test]
        fn f_equals_insertions_minus_deletions(ups in updates()) {
            let mut st = ExactState::new(cfg(StreamKind::GeneralTurnstile));
            for (i, d) in ups {
                st.apply(Update::new(i, d)).unwrap();
                prop_assert_eq!(
                    st.frequency(i),
                    st.insertions(i) as i64 - st.deletions(i) as i64
                );
            }
            for i in 0..64 {
                prop_assert_eq!(st.frequency(i), st.insertions(i) as i64 - st.deletions(i) as i64);
            }
        }

        #[test]
        fn alpha_is_order_invariant(ups in updates(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let ups: Vec<Update> = ups.into_iter().map(|(i, d)| Update::new(i, d)).collect();
            let mut shuffled = ups.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = ExactState::replay(cfg(StreamKind::GeneralTurnstile), &ups).unwrap();
            let b = ExactState::replay(cfg(StreamKind::GeneralTurnstile), &shuffled).unwrap();
            prop_assert_eq!(a.alpha_lp(Norm::L1), b.alpha_lp(Norm::L1));
            prop_assert_eq!(a.alpha_lp(Norm::L0), b.alpha_lp(Norm::L0));
            prop_assert_eq!(a.strong_alpha(), b.strong_alpha());
        }
    }
}
