//! L1 sampling by precision scaling.
//!
//! Every item gets a scale `t_i` uniform in `(0, 1]`; the sketch tracks
//! `z_i = f_i / t_i` in a CSSS. An item is returned when its scaled value
//! clears `||f||_1 / eps`, which happens with probability close to
//! `eps |f_i| / ||f||_1`, and when the tail of `z` is light enough for the
//! sketch to have found it.

use serde::{Deserialize, Serialize};

use crate::csss::{estimate_tail_error, CsssConfig, CsssTable};
use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, seeded_rng, KWiseHash};
use crate::l1_estimator::{GeneralL1Config, GeneralL1Estimator};
use crate::stream::Update;

/// Scaled values are fed to the sketch in units of `2^-FIXED_POINT_BITS`.
pub const FIXED_POINT_BITS: u32 = 10;
const FIXED_POINT: f64 = (1u64 << FIXED_POINT_BITS) as f64;
/// Largest denominator of the scales.
const MAX_Q_BITS: u32 = 60;
/// Accuracy of the norm estimates in general mode; constant factors suffice.
const GENERAL_NORM_EPS: f64 = 0.5;

/// Per-item scales `t_i = j_i / Q` with `j_i` uniform in `[1, Q]`, `Q = n^3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionScaler {
    hash: KWiseHash,
    q_bits: u32,
}

impl PrecisionScaler {
    pub fn new(n: u64, eps: f64, seed: u64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(SketchError::param("n", "must be a power of two >= 2"));
        }
        let q_bits = (3 * n.trailing_zeros()).min(MAX_Q_BITS);
        let k = (2.0 * (1.0 / eps).log2().ceil()).max(4.0) as usize;
        Ok(Self {
            hash: KWiseHash::from_seed(k, 1 << q_bits, seed),
            q_bits,
        })
    }

    pub fn independence(&self) -> usize {
        self.hash.k()
    }

    pub fn denominator(&self) -> u64 {
        1 << self.q_bits
    }

    /// `j_i` in `[1, Q]`.
    pub fn numerator(&self, i: u64) -> u64 {
        self.hash.eval(i) + 1
    }

    pub fn scale(&self, i: u64) -> f64 {
        self.numerator(i) as f64 / self.denominator() as f64
    }

    /// `delta / t_i` in fixed point, rounded to the nearest unit and
    /// saturated to the `i64` range.
    pub fn scaled_units(&self, i: u64, delta: i64) -> i64 {
        let j = self.numerator(i) as u128;
        let num = (delta.unsigned_abs() as u128) << (self.q_bits + FIXED_POINT_BITS);
        let units = (num + j / 2) / j;
        let units = units.min(i64::MAX as u128) as i64;
        if delta < 0 {
            -units
        } else {
            units
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1SamplerConfig {
    pub n: u64,
    pub eps: f64,
    pub alpha: f64,
    /// Heavy-max constant; see [`calibrate_c_prop`].
    pub c_prop: f64,
    /// CSSS sensitivity `k = ceil(c_k * log2(1/eps))`.
    pub c_k: f64,
    pub csss_constants: (f64, f64, f64),
    /// Instances in [`l1_sample`]: `ceil(c_inst / eps * ln(1/delta))`.
    pub c_inst: f64,
    /// Approximate `r` and `q` with general-turnstile estimators instead of
    /// running sums.
    pub general: bool,
    /// Stream mass bound; only used in general mode.
    pub m_max: u64,
}

impl L1SamplerConfig {
    pub fn new(n: u64, eps: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            n,
            eps,
            alpha,
            c_prop: 0.25,
            c_k: 4.0,
            csss_constants: (2.0, 1.0, 1.0),
            c_inst: 2.0,
            general: false,
            m_max: 1 << 32,
        };
        cfg.csss()?;
        Ok(cfg)
    }

    fn log_n(&self) -> f64 {
        self.n.trailing_zeros() as f64
    }

    /// CSSS accuracy `eps^3 / log^2 n`.
    pub fn inner_eps(&self) -> f64 {
        self.eps.powi(3) / self.log_n().powi(2)
    }

    pub fn csss(&self) -> Result<CsssConfig> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SketchError::param("eps", "must lie in (0, 1)"));
        }
        if !(self.c_prop > 0.0 && self.c_k > 0.0 && self.c_inst > 0.0) {
            return Err(SketchError::param("constants", "must be positive"));
        }
        let k = (self.c_k * (1.0 / self.eps).log2()).ceil().max(1.0) as usize;
        let (c_d, c_t, c_s) = self.csss_constants;
        CsssConfig::new(self.n, k, self.inner_eps(), self.alpha)?.with_constants(c_d, c_t, c_s)
    }

    pub fn instances(&self, delta: f64) -> usize {
        (self.c_inst / self.eps * (1.0 / delta).ln())
            .ceil()
            .max(1.0) as usize
    }
}

/// Why a query returned no sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailReason {
    EmptyStream,
    /// The tail estimate of `z` is too large for recovery to be trusted.
    HeavyTail,
    /// The largest scaled estimate is below the acceptance threshold.
    BelowThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleOutcome {
    Found { index: u64, estimate: f64 },
    Fail(FailReason),
}

impl SampleOutcome {
    pub fn found(&self) -> Option<(u64, f64)> {
        match *self {
            SampleOutcome::Found { index, estimate } => Some((index, estimate)),
            SampleOutcome::Fail(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Norms {
    /// Running sums of `delta` and of the scaled units.
    Exact { r: i128, q_units: i128 },
    Estimated {
        r: Box<GeneralL1Estimator>,
        q: Box<GeneralL1Estimator>,
    },
}

#[derive(Debug, Clone)]
pub struct L1Sampler {
    config: L1SamplerConfig,
    scaler: PrecisionScaler,
    table: CsssTable,
    tail: CsssTable,
    norms: Norms,
}

impl L1Sampler {
    pub fn new(config: L1SamplerConfig, seed: u64) -> Result<Self> {
        let csss = config.csss()?;
        let scaler = PrecisionScaler::new(config.n, config.eps, derive_seed(seed, 0))?;
        let norms = if config.general {
            let r_cfg =
                GeneralL1Config::new(config.n, config.m_max, GENERAL_NORM_EPS, config.alpha)?;
            // Scaled mass is at most Q * 2^FIXED_POINT_BITS times the stream mass.
            let q_max = (config.m_max as u128) << (scaler.q_bits + FIXED_POINT_BITS);
            let q_cfg = GeneralL1Config {
                m_max: q_max.min(u64::MAX as u128) as u64,
                ..r_cfg
            };
            Norms::Estimated {
                r: Box::new(GeneralL1Estimator::new(r_cfg, derive_seed(seed, 3))?),
                q: Box::new(GeneralL1Estimator::new(q_cfg, derive_seed(seed, 4))?),
            }
        } else {
            Norms::Exact { r: 0, q_units: 0 }
        };
        Ok(Self {
            config,
            table: CsssTable::new(csss, derive_seed(seed, 1))?,
            tail: CsssTable::new(csss, derive_seed(seed, 2))?,
            scaler,
            norms,
        })
    }

    pub fn config(&self) -> &L1SamplerConfig {
        &self.config
    }

    pub fn scaler(&self) -> &PrecisionScaler {
        &self.scaler
    }

    pub fn table(&self) -> &CsssTable {
        &self.table
    }

    pub fn update(&mut self, u: Update) -> Result<()> {
        let z = Update::new(u.index, self.scaler.scaled_units(u.index, u.delta));
        if z.delta == 0 {
            return Ok(());
        }
        self.table.update(z)?;
        self.tail.update(z)?;
        match &mut self.norms {
            Norms::Exact { r, q_units } => {
                *r += u.delta as i128;
                *q_units += z.delta as i128;
            }
            Norms::Estimated { r, q } => {
                r.update(u)?;
                q.update(z)?;
            }
        }
        Ok(())
    }

    /// `(r, q)` with `q` in fixed-point units.
    fn norms(&self) -> Result<(f64, f64)> {
        match &self.norms {
            Norms::Exact { r, q_units } => Ok((*r as f64, *q_units as f64)),
            Norms::Estimated { r, q } => Ok((r.estimate()?, q.estimate()?)),
        }
    }

    pub fn query(&self) -> Result<SampleOutcome> {
        let (r, q) = self.norms()?;
        if r <= 0.0 {
            return Ok(SampleOutcome::Fail(FailReason::EmptyStream));
        }
        let eps = self.config.eps;
        let sqrt_k = (self.table.config().k as f64).sqrt();
        let v = estimate_tail_error(&self.table, &self.tail, q)?;
        if v > sqrt_k * r * FIXED_POINT + 45.0 * sqrt_k * self.config.inner_eps() * q {
            return Ok(SampleOutcome::Fail(FailReason::HeavyTail));
        }
        let Some(&(index, y)) = self.table.topk(1)?.first() else {
            return Ok(SampleOutcome::Fail(FailReason::BelowThreshold));
        };
        let y = y.unsigned_abs() as f64;
        let log2n = self.config.log_n().powi(2);
        let cut = (r * FIXED_POINT / eps).max(self.config.c_prop / 2.0 * eps * eps / log2n * q);
        if y < cut {
            return Ok(SampleOutcome::Fail(FailReason::BelowThreshold));
        }
        Ok(SampleOutcome::Found {
            index,
            estimate: self.scaler.scale(index) * y / FIXED_POINT,
        })
    }
}

/// Runs independent samplers over `updates` and returns the first success.
pub fn l1_sample(
    updates: &[Update],
    config: L1SamplerConfig,
    delta: f64,
    seed: u64,
) -> Result<SampleOutcome> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SketchError::param("delta", "must lie in (0, 1)"));
    }
    let mut last = SampleOutcome::Fail(FailReason::EmptyStream);
    for inst in 0..config.instances(delta) {
        let mut sampler = L1Sampler::new(config, derive_seed(seed, inst as u64))?;
        for &u in updates {
            sampler.update(u)?;
        }
        last = sampler.query()?;
        if last.found().is_some() {
            return Ok(last);
        }
    }
    Ok(last)
}

/// Empirical constant `c` such that `max |z_i| >= c eps^2 / log^2 n * ||z||_1`
/// holds in a `1 - eps` fraction of `trials` random scalings of `freqs`.
pub fn calibrate_c_prop(
    freqs: &[(u64, i64)],
    n: u64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(SketchError::param("trials", "must be positive"));
    }
    let log2n = (n.trailing_zeros() as f64).powi(2);
    let mut rng = seeded_rng(seed);
    let mut ratios: Vec<f64> = (0..trials)
        .map(|_| {
            let scaler = PrecisionScaler::new(n, eps, rand::Rng::random(&mut rng))?;
            let z: Vec<f64> = freqs
                .iter()
                .map(|&(i, f)| (f as f64 / scaler.scale(i)).abs())
                .collect();
            let total: f64 = z.iter().sum();
            let max = z.iter().copied().fold(0.0, f64::max);
            Ok(if total == 0.0 {
                f64::INFINITY
            } else {
                max / total * log2n / (eps * eps)
            })
        })
        .collect::<Result<_>>()?;
    ratios.sort_by(f64::total_cmp);
    Ok(ratios[((eps * trials as f64).floor() as usize).min(trials - 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{ExactState, StreamConfig, StreamKind};

    fn sixteen_items() -> Vec<Update> {
        // Weights 1..16, with some churn so deletions occur.
        let mut ups = Vec::new();
        for i in 0..16u64 {
            ups.push(Update::new(i, 10 * (i as i64 + 1) + 5));
        }
        for i in 0..16u64 {
            ups.push(Update::new(i, -5));
        }
        ups
    }

    #[test]
    fn scaler_basics() {
        let s = PrecisionScaler::new(16, 0.25, 3).unwrap();
        assert_eq!(s.denominator(), 4096);
        assert!(s.independence() >= 4);
        for i in 0..16 {
            let j = s.numerator(i);
            assert!((1..=4096).contains(&j));
            let t = s.scale(i);
            assert!(t > 0.0 && t <= 1.0);
            let u = s.scaled_units(i, 3) as f64 / FIXED_POINT;
            assert!((u - 3.0 / t).abs() <= 0.5 / FIXED_POINT + 1e-9);
            assert_eq!(s.scaled_units(i, -3), -s.scaled_units(i, 3));
        }
        assert_eq!(s, PrecisionScaler::new(16, 0.25, 3).unwrap());
    }

    #[test]
    fn quarter_scale_quadruples() {
        // A constant hash pins every scale to 1024 / 4096.
        let hash = KWiseHash::from_coeffs(vec![1023], 4096);
        let quarter = PrecisionScaler { hash, q_bits: 12 };
        assert_eq!(quarter.scale(5), 0.25);
        assert_eq!(quarter.scaled_units(5, 1), 4 << FIXED_POINT_BITS);
    }

    #[test]
    fn unit_scales_make_q_equal_r() {
        let cfg = L1SamplerConfig::new(16, 0.25, 1.0).unwrap();
        let mut sampler = L1Sampler::new(cfg, 0).unwrap();
        sampler.scaler = PrecisionScaler {
            hash: KWiseHash::from_coeffs(vec![4095], 4096),
            q_bits: 12,
        };
        for u in sixteen_items() {
            sampler.update(u).unwrap();
        }
        let (r, q) = sampler.norms().unwrap();
        assert_eq!(q, r * FIXED_POINT);
    }

    #[test]
    fn empty_stream_fails() {
        let cfg = L1SamplerConfig::new(16, 0.25, 1.0).unwrap();
        let sampler = L1Sampler::new(cfg, 0).unwrap();
        assert_eq!(
            sampler.query().unwrap(),
            SampleOutcome::Fail(FailReason::EmptyStream)
        );
        assert_eq!(
            l1_sample(&[], cfg, 0.1, 0).unwrap(),
            SampleOutcome::Fail(FailReason::EmptyStream)
        );
    }

    #[test]
    fn single_item_always_returned() {
        let cfg = L1SamplerConfig::new(16, 0.25, 1.0).unwrap();
        let ups = [Update::new(9, 40), Update::new(9, -10)];
        for seed in 0..50 {
            let out = l1_sample(&ups, cfg, 0.1, seed).unwrap();
            if let Some((i, est)) = out.found() {
                assert_eq!(i, 9);
                assert!((est - 30.0).abs() <= 0.5 * 30.0);
            }
            // A single instance succeeds exactly when t_9 <= eps.
            let mut s = L1Sampler::new(cfg, seed).unwrap();
            ups.iter().for_each(|&u| s.update(u).unwrap());
            let found = s.query().unwrap().found().is_some();
            assert_eq!(found, s.scaler().scale(9) <= 0.25, "seed {seed}");
        }
    }

    #[test]
    fn scaled_stream_keeps_alpha() {
        let cfg = StreamConfig::new(16, 1 << 20, 1 << 20, StreamKind::StrictTurnstile).unwrap();
        let ups = sixteen_items();
        let f = ExactState::replay(cfg, &ups).unwrap();
        let big =
            StreamConfig::new(16, u64::MAX, u64::MAX >> 1, StreamKind::StrictTurnstile).unwrap();
        for seed in 0..20 {
            let s = PrecisionScaler::new(16, 0.25, seed).unwrap();
            let z: Vec<Update> = ups
                .iter()
                .map(|u| Update::new(u.index, s.scaled_units(u.index, u.delta)))
                .collect();
            let zs = ExactState::replay(big, &z).unwrap();
            let az = zs.alpha_lp(crate::stream::Norm::L1).as_f64();
            assert!(az <= f.strong_alpha().as_f64() * (1.0 + 1e-6), "{az}");
        }
    }

    #[test]
    fn output_distribution_tracks_weights() {
        let cfg = L1SamplerConfig::new(16, 0.25, 2.0).unwrap();
        let ups = sixteen_items();
        let mut counts = [0u32; 16];
        let mut found = 0;
        let mut seed = 0;
        while found < 2_000 {
            let mut s = L1Sampler::new(cfg, seed).unwrap();
            seed += 1;
            ups.iter().for_each(|&u| s.update(u).unwrap());
            if let Some((i, _)) = s.query().unwrap().found() {
                counts[i as usize] += 1;
                found += 1;
            }
        }
        let total: f64 = (1..=16).map(|w| 10.0 * w as f64).sum();
        let tv: f64 = (0..16)
            .map(|i| (counts[i] as f64 / found as f64 - 10.0 * (i + 1) as f64 / total).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.1, "tv = {tv}");
    }

    #[test]
    fn calibration_is_positive() {
        let freqs: Vec<(u64, i64)> = (0..16).map(|i| (i, i as i64 + 1)).collect();
        let c = calibrate_c_prop(&freqs, 16, 0.25, 500, 1).unwrap();
        assert!(c > 0.0 && c.is_finite());
        assert!(calibrate_c_prop(&freqs, 16, 0.25, 0, 1).is_err());
    }

    #[test]
    fn general_mode_samples() {
        let mut cfg = L1SamplerConfig::new(16, 0.25, 2.0).unwrap();
        cfg.general = true;
        cfg.m_max = 1_000;
        let ups = sixteen_items();
        let successes = (0..20)
            .filter(|&seed| l1_sample(&ups, cfg, 0.1, seed).unwrap().found().is_some())
            .count();
        assert!(successes >= 15, "{successes}/20");
    }
}
