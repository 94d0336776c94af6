//! L1 heavy hitters over a sampled Countsketch.
//!
//! Items are reported when their estimate reaches `3 eps R / 4`, where `R` is
//! `||f||_1` exactly (strict turnstile: the running sum of deltas) or a
//! `(1 ± 1/8)` estimate (general turnstile).

use serde::{Deserialize, Serialize};

use crate::csss::{CsssConfig, CsssTable};
use crate::error::{Result, SketchError};
use crate::hashing::derive_seed;
use crate::l1_estimator::{GeneralL1Config, GeneralL1Estimator};
use crate::stream::{StreamConfig, StreamKind, Update};

/// Accuracy of the norm estimate used in general mode.
pub const GENERAL_NORM_EPS: f64 = 1.0 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HhMode {
    Strict,
    General,
}

impl std::str::FromStr for HhMode {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Self::Strict),
            "general" => Ok(Self::General),
            other => Err(SketchError::param(
                "mode",
                format!("unknown mode `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhConfig {
    pub n: u64,
    /// Upper bound on stream mass; only used to size the general-mode norm.
    pub m_max: u64,
    pub eps: f64,
    pub alpha: f64,
    pub mode: HhMode,
    /// CSSS constants `(c_d, c_t, c_s)`.
    pub csss_constants: (f64, f64, f64),
}

impl HhConfig {
    pub fn new(stream: &StreamConfig, eps: f64, alpha: f64) -> Result<Self> {
        let mode = match stream.kind {
            StreamKind::GeneralTurnstile => HhMode::General,
            _ => HhMode::Strict,
        };
        let cfg = Self {
            n: stream.n,
            m_max: stream.m_max,
            eps,
            alpha,
            mode,
            csss_constants: (2.0, 1.0, 1.0),
        };
        cfg.csss()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: HhMode) -> Self {
        self.mode = mode;
        self
    }

    /// CSSS with sensitivity `32 / eps` and accuracy `eps / 32`.
    pub fn csss(&self) -> Result<CsssConfig> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SketchError::param("eps", "must lie in (0, 1)"));
        }
        let (c_d, c_t, c_s) = self.csss_constants;
        CsssConfig::new(
            self.n,
            (32.0 / self.eps).ceil() as usize,
            self.eps / 32.0,
            self.alpha,
        )?
        .with_constants(c_d, c_t, c_s)
    }
}

#[derive(Debug, Clone)]
enum NormTracker {
    /// Running sum of deltas; equals `||f||_1` on strict streams.
    Exact(i128),
    Estimated(Box<GeneralL1Estimator>),
}

#[derive(Debug, Clone)]
pub struct HeavyHitters {
    config: HhConfig,
    table: CsssTable,
    norm: NormTracker,
}

impl HeavyHitters {
    pub fn new(config: HhConfig, seed: u64) -> Result<Self> {
        let table = CsssTable::new(config.csss()?, derive_seed(seed, 0))?;
        let norm = match config.mode {
            HhMode::Strict => NormTracker::Exact(0),
            HhMode::General => {
                let cfg =
                    GeneralL1Config::new(config.n, config.m_max, GENERAL_NORM_EPS, config.alpha)?;
                NormTracker::Estimated(Box::new(GeneralL1Estimator::new(
                    cfg,
                    derive_seed(seed, 1),
                )?))
            }
        };
        Ok(Self {
            config,
            table,
            norm,
        })
    }

    pub fn config(&self) -> &HhConfig {
        &self.config
    }

    pub fn table(&self) -> &CsssTable {
        &self.table
    }

    pub fn update(&mut self, u: Update) -> Result<()> {
        self.table.update(u)?;
        match &mut self.norm {
            NormTracker::Exact(r) => *r += u.delta as i128,
            NormTracker::Estimated(est) => est.update(u)?,
        }
        Ok(())
    }

    /// `R`: the exact running sum, or the general-mode estimate.
    pub fn norm(&self) -> Result<f64> {
        match &self.norm {
            NormTracker::Exact(r) => Ok(*r as f64),
            NormTracker::Estimated(est) => est.estimate(),
        }
    }

    /// Items whose estimate reaches `3 eps R / 4`, in index order.
    pub fn query(&self) -> Result<Vec<u64>> {
        self.query_with_norm(self.norm()?)
    }

    /// As [`query`](Self::query) with a caller-supplied `R`.
    pub fn query_with_norm(&self, r: f64) -> Result<Vec<u64>> {
        let cut = 0.75 * self.config.eps * r;
        let ys = self.table.query_all()?;
        Ok(select_heavy(&ys, cut))
    }
}

/// Indices whose `|y|` reaches `cut`; a zero estimate never qualifies.
pub fn select_heavy(ys: &[i64], cut: f64) -> Vec<u64> {
    ys.iter()
        .enumerate()
        .filter(|&(_, &y)| y != 0 && y.unsigned_abs() as f64 >= cut)
        .map(|(i, _)| i as u64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{plant_stream, ExactState, PlantedItem};
    use proptest::bool::ANY;
    use proptest::prelude::{prop_assert, proptest};

    fn strict_cfg(n: u64) -> StreamConfig {
        StreamConfig::new(n, 1 << 20, 1 << 20, StreamKind::StrictTurnstile).unwrap()
    }

    #[test]
    fn running_sum_tracks_updates() {
        let mut hh =
            HeavyHitters::new(HhConfig::new(&strict_cfg(64), 0.1, 1.0).unwrap(), 0).unwrap();
        hh.update(Update::new(3, 1)).unwrap();
        assert_eq!(hh.norm().unwrap(), 1.0);
        hh.update(Update::new(5, 4)).unwrap();
        hh.update(Update::new(5, -4)).unwrap();
        assert_eq!(hh.norm().unwrap(), 1.0);
        assert_eq!(hh.table().position(), 9);
    }

    #[test]
    fn single_item_and_empty_stream() {
        let cfg = HhConfig::new(&strict_cfg(64), 0.1, 1.0).unwrap();
        let mut hh = HeavyHitters::new(cfg, 1).unwrap();
        assert!(hh.query().unwrap().is_empty());
        hh.update(Update::new(42, 9)).unwrap();
        assert_eq!(hh.query().unwrap(), vec![42]);
    }

    #[test]
    fn planted_heavy_item_is_separated() {
        let cfg = strict_cfg(1 << 10);
        let eps = 0.1;
        for trial in 0..20u64 {
            // One item with 20% of the mass, the rest below 5%.
            let mut items = vec![PlantedItem::new(7, 2_000).with_churn(1_500)];
            items.extend((0..40).map(|i| PlantedItem::new(100 + i, 200).with_churn(150)));
            let ups = plant_stream(&cfg, &items, trial).unwrap();
            let oracle = ExactState::replay(cfg, &ups).unwrap();
            let l1 = oracle.l1() as f64;
            let mut hh = HeavyHitters::new(HhConfig::new(&cfg, eps, 4.0).unwrap(), trial).unwrap();
            for &u in &ups {
                hh.update(u).unwrap();
            }
            let got = hh.query().unwrap();
            for (i, f) in oracle.frequencies() {
                let f = f.unsigned_abs() as f64;
                if f >= eps * l1 {
                    assert!(got.contains(&i), "missed {i}");
                }
                if f < eps / 2.0 * l1 {
                    assert!(!got.contains(&i), "false positive {i}");
                }
            }
        }
    }

    #[test]
    fn general_norm_on_insertions() {
        let cfg = StreamConfig::new(1 << 8, 2_000, 100, StreamKind::GeneralTurnstile).unwrap();
        let mut good = 0;
        for seed in 0..20 {
            let mut hh = HeavyHitters::new(HhConfig::new(&cfg, 0.1, 1.0).unwrap(), seed).unwrap();
            for i in 0..20u64 {
                hh.update(Update::new(i * 3, 100)).unwrap();
            }
            let r = hh.norm().unwrap_or(0.0);
            if (r - 2_000.0).abs() <= 2_000.0 / 8.0 {
                good += 1;
            }
        }
        assert!(good >= 17, "{good}/20");
    }

    #[test]
    fn zero_stream_norm_is_zero() {
        let cfg = StreamConfig::new(1 << 8, 100, 100, StreamKind::GeneralTurnstile).unwrap();
        let hh = HeavyHitters::new(HhConfig::new(&cfg, 0.1, 1.0).unwrap(), 0).unwrap();
        assert_eq!(hh.norm().unwrap(), 0.0);
    }

    proptest! {
        // With |y - f| <= eps R / 8 and R within 1/8 of the norm, the cut at
        // 3 eps R / 4 separates eps-heavy from sub-eps/2 items.
        #[test]
        fn threshold_separates(
            l1 in 1e5f64..1e9,
            eps in 0.01f64..0.5,
            r_err in -0.125f64..0.125,
            y_err in -1.0f64..1.0,
            heavy in ANY,
            w in 0.0f64..1.0,
        ) {
            let r = l1 * (1.0 + r_err);
            let f = if heavy { eps * l1 * (1.0 + w) } else { eps / 2.0 * l1 * w };
            let y = (f + y_err * eps * l1 / 8.0).round() as i64;
            let picked = !select_heavy(&[y], 0.75 * eps * r).is_empty();
            if heavy { prop_assert!(picked); } else { prop_assert!(!picked); }
        }
    }
}
