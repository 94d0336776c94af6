use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::scheduler::{ClockKind, LevelScheduler};
use super::strict::level_base;
use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, seeded_rng, KWiseHash, SketchRng, StableFamily, MERSENNE_61};
use crate::stream::Update;

/// Independence of the median rows.
const MEDIAN_ROW_K: usize = 4;
/// Accumulators beyond this magnitude put the sketch in the failed state.
const ACCUMULATOR_LIMIT: i128 = 1 << 62;

/// Sizing of a [`GeneralL1Estimator`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralL1Config {
    pub n: u64,
    /// Upper bound on the stream mass; fixes the rounding precision.
    pub m_max: u64,
    pub eps: f64,
    pub delta: f64,
    pub alpha: f64,
    /// Main rows: `ceil(c_r / eps^2)`.
    pub c_r: f64,
    /// Rows whose median absolute value sets the cosine scale.
    pub median_rows: usize,
    /// Expected samples per unit of `|delta * A|` at level 0 is
    /// `c_samp * alpha^2 * log n / eps^2`.
    pub c_samp: f64,
    /// Scales the level base; see [`level_base`].
    pub c_lvl: f64,
    pub clock: ClockKind,
}

impl GeneralL1Config {
    pub fn new(n: u64, m_max: u64, eps: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n,
            m_max,
            eps,
            delta: 0.1,
            alpha,
            c_r: 12.0,
            median_rows: 25,
            c_samp: 4.0,
            c_lvl: 1.0,
            clock: ClockKind::Morris,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        level_base(self.n, self.eps, self.delta, self.alpha, self.c_lvl)?;
        if self.m_max == 0 {
            return Err(SketchError::param("m_max", "must be positive"));
        }
        if !(self.c_r > 0.0 && self.c_samp > 0.0) {
            return Err(SketchError::param("constants", "must be positive"));
        }
        if self.median_rows == 0 {
            return Err(SketchError::param("median_rows", "must be positive"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        (self.c_r / (self.eps * self.eps)).ceil() as usize
    }

    /// `max(4, ceil(ln(1/eps) / ln ln(1/eps)))`.
    pub fn stable_k(&self) -> usize {
        let l = (1.0 / self.eps).ln();
        let ll = l.ln();
        if ll <= 0.0 {
            return 4;
        }
        ((l / ll).ceil() as usize).max(4)
    }

    /// Rounding precision of the Cauchy entries, `eps / m_max`.
    pub fn delta_prec(&self) -> f64 {
        self.eps / self.m_max as f64
    }

    pub fn level_base(&self) -> u64 {
        level_base(self.n, self.eps, self.delta, self.alpha, self.c_lvl).expect("validated")
    }

    pub fn samples_per_unit(&self) -> f64 {
        let log_n = self.n.trailing_zeros() as f64;
        self.c_samp * self.alpha * self.alpha * log_n / (self.eps * self.eps)
    }
}

/// Sampled accumulators of one level: main rows, then median rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators(pub Vec<i128>);

/// Cauchy sketch `y = Af`, `y' = A'f` whose entries are rounded to integers
/// and then binomially sampled so the counters stay short.
#[derive(Debug, Clone)]
pub struct GeneralL1Estimator {
    config: GeneralL1Config,
    families: Vec<StableFamily>,
    scheduler: LevelScheduler<Accumulators>,
    rng: SketchRng,
    units: Vec<i128>,
    failed: bool,
}

impl GeneralL1Estimator {
    pub fn new(config: GeneralL1Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let rows = config.rows();
        let prec = config.delta_prec();
        // Row seeds are pairwise independent across rows.
        let row_seeds = KWiseHash::from_seed(2, MERSENNE_61, derive_seed(seed, 0));
        let families = (0..rows + config.median_rows)
            .map(|i| {
                let k = if i < rows {
                    config.stable_k()
                } else {
                    MEDIAN_ROW_K
                };
                StableFamily::from_seed(k, prec, row_seeds.eval_field(i as u64))
            })
            .collect();
        Ok(Self {
            config,
            families,
            scheduler: LevelScheduler::new(config.level_base(), config.clock)?,
            rng: seeded_rng(derive_seed(seed, 1)),
            units: vec![0; rows + config.median_rows],
            failed: false,
        })
    }

    pub fn config(&self) -> &GeneralL1Config {
        &self.config
    }

    pub fn scheduler(&self) -> &LevelScheduler<Accumulators> {
        &self.scheduler
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    pub fn update(&mut self, u: Update) -> Result<()> {
        if self.failed {
            return Err(SketchError::Saturated {
                bound: ACCUMULATOR_LIMIT as u64,
            });
        }
        if u.delta == 0 {
            return Ok(());
        }
        for (slot, fam) in self.units.iter_mut().zip(&self.families) {
            *slot = fam.draw(u.index).units;
        }
        let sign: i128 = u.delta.signum().into();
        let rows = self.units.len();
        let base_rate = self.config.samples_per_unit() * self.config.delta_prec();
        let Self {
            scheduler,
            rng,
            units,
            failed,
            ..
        } = self;
        let log_s = scheduler.log_s();
        scheduler.advance(
            u.magnitude(),
            rng,
            |_| Accumulators(vec![0; rows]),
            |level, count, rng| {
                let rate = (base_rate * 0.5f64.powi((level.j * log_s) as i32)).min(1.0);
                for (acc, &a) in level.payload.0.iter_mut().zip(units.iter()) {
                    if a == 0 {
                        continue;
                    }
                    let total = count as u128 * a.unsigned_abs();
                    let kept = sample_wide(total, rate, rng) as i128;
                    *acc += sign * a.signum() * kept;
                    if acc.abs() > ACCUMULATOR_LIMIT {
                        *failed = true;
                    }
                }
            },
        );
        if self.failed {
            return Err(SketchError::Saturated {
                bound: ACCUMULATOR_LIMIT as u64,
            });
        }
        Ok(())
    }

    /// Estimate of `||f||_1` from the oldest live level.
    pub fn estimate(&self) -> Result<f64> {
        if self.failed {
            return Err(SketchError::Failed);
        }
        let Some(oldest) = self.scheduler.oldest() else {
            return Ok(0.0);
        };
        let rows = self.config.rows();
        let (main, med) = oldest.payload.0.split_at(rows);
        let mut abs: Vec<f64> = med.iter().map(|&y| (y as f64).abs()).collect();
        abs.sort_by(f64::total_cmp);
        let y_med = abs[abs.len() / 2];
        if y_med == 0.0 {
            return Ok(0.0);
        }
        let mean_cos = main.iter().map(|&y| (y as f64 / y_med).cos()).sum::<f64>() / rows as f64;
        if mean_cos <= 0.0 {
            return Err(SketchError::EstimatorFailed(format!(
                "mean cosine {mean_cos:.4} is not positive"
            )));
        }
        // Accumulator units are delta_prec / rate of the oldest level.
        let rate = (self.config.samples_per_unit() * self.config.delta_prec()
            / self.scheduler.scale(oldest.j))
        .min(1.0);
        let unit = self.config.delta_prec() / rate;
        Ok(unit * y_med * -mean_cos.ln())
    }

    /// Bits needed by the widest live accumulator, sign excluded.
    pub fn counter_bits(&self) -> u32 {
        let max = self
            .scheduler
            .live()
            .iter()
            .flat_map(|l| l.payload.0.iter())
            .map(|y| y.unsigned_abs())
            .max()
            .unwrap_or(0);
        128 - max.leading_zeros()
    }
}

/// `Binomial(total, rate)` for totals wider than `u64`.
fn sample_wide<R: Rng + ?Sized>(mut total: u128, rate: f64, rng: &mut R) -> u128 {
    if rate >= 1.0 {
        return total;
    }
    let mut kept = 0u128;
    while total > 0 {
        let chunk = total.min(u64::MAX as u128 >> 1) as u64;
        kept += Binomial::new(chunk, rate)
            .expect("rate in [0, 1]")
            .sample(rng) as u128;
        total -= chunk as u128;
    }
    kept
}
