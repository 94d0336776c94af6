use serde::{Deserialize, Serialize};

use super::{ConstL0, L0Config, L0Matrix, RoughF0, SmallF0, SmallL0, SmallResult};
use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, seeded_rng};
use crate::stream::Update;

/// Which reading produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L0Branch {
    Exact,
    Small,
    Main,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0Estimate {
    pub value: f64,
    pub branch: L0Branch,
}

/// One repetition: rough tracker, both small branches, the constant-factor
/// estimator and the windowed matrix, all fed by the same pass.
#[derive(Debug, Clone)]
pub struct L0Estimator {
    config: L0Config,
    rough: RoughF0,
    small_f0: SmallF0,
    small_l0: SmallL0,
    const_l0: ConstL0,
    matrix: L0Matrix,
}

impl L0Estimator {
    pub fn new(config: L0Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = |tag| seeded_rng(derive_seed(seed, tag));
        Ok(Self {
            config,
            rough: RoughF0::new(config.kmv_k, derive_seed(seed, 0)),
            small_f0: SmallF0::new(&config, &mut rng(1))?,
            small_l0: SmallL0::new(&config, &mut rng(2))?,
            const_l0: ConstL0::new(&config, &mut rng(3))?,
            matrix: L0Matrix::new(&config, &mut rng(4))?,
        })
    }

    pub fn config(&self) -> &L0Config {
        &self.config
    }

    /// `max(F~0, 8 log n / log log n)`.
    pub fn l0_bar(&self) -> f64 {
        self.rough.estimate().max(self.config.l0_floor())
    }

    pub fn update(&mut self, u: Update) {
        self.rough.update(u.index);
        let bar = self.l0_bar();
        self.small_f0.update(u);
        self.small_l0.update(u);
        self.const_l0.update(u, bar);
        self.matrix.update(u, bar);
    }

    pub fn estimate(&self) -> Result<L0Estimate> {
        if let SmallResult::Value(value) = self.small_f0.query() {
            return Ok(L0Estimate {
                value,
                branch: L0Branch::Exact,
            });
        }
        if let SmallResult::Value(value) = self.small_l0.query() {
            return Ok(L0Estimate {
                value,
                branch: L0Branch::Small,
            });
        }
        let value = self.matrix.estimate(self.const_l0.query())?;
        Ok(L0Estimate {
            value,
            branch: L0Branch::Main,
        })
    }

    pub fn rough(&self) -> &RoughF0 {
        &self.rough
    }

    pub fn small_f0(&self) -> &SmallF0 {
        &self.small_f0
    }

    pub fn small_l0(&self) -> &SmallL0 {
        &self.small_l0
    }

    pub fn const_l0(&self) -> &ConstL0 {
        &self.const_l0
    }

    pub fn matrix(&self) -> &L0Matrix {
        &self.matrix
    }
}

/// `config.reps` independent repetitions fed by one pass.
#[derive(Debug, Clone)]
pub struct L0Full {
    reps: Vec<L0Estimator>,
}

impl L0Full {
    pub fn new(config: L0Config, seed: u64) -> Result<Self> {
        let reps = (0..config.reps as u64)
            .map(|r| L0Estimator::new(config, derive_seed(seed, r)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { reps })
    }

    pub fn update(&mut self, u: Update) {
        for rep in &mut self.reps {
            rep.update(u);
        }
    }

    pub fn repetitions(&self) -> &[L0Estimator] {
        &self.reps
    }

    /// Most matrix rows any repetition held at once.
    pub fn peak_rows(&self) -> usize {
        self.reps
            .iter()
            .map(|r| r.matrix().peak_rows())
            .max()
            .unwrap_or(0)
    }

    pub fn counter_bits(&self) -> u32 {
        self.reps
            .iter()
            .map(|r| r.matrix().counter_bits())
            .max()
            .unwrap_or(0)
    }

    /// Median of the repetitions that produce an estimate.
    ///
    /// Repetitions that fail (a missing or saturated row) are left out; if
    /// all fail, the first error is returned.
    pub fn estimate(&self) -> Result<L0Estimate> {
        let mut first_err = None;
        let mut ok: Vec<L0Estimate> = Vec::with_capacity(self.reps.len());
        for rep in &self.reps {
            match rep.estimate() {
                Ok(e) => ok.push(e),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if ok.is_empty() {
            return Err(first_err.unwrap_or(SketchError::Failed));
        }
        ok.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(ok[(ok.len() - 1) / 2])
    }
}

/// Median over `config.reps` independent repetitions of one pass.
pub fn l0_full(config: L0Config, updates: &[Update], seed: u64) -> Result<L0Estimate> {
    let mut full = L0Full::new(config, seed)?;
    for &u in updates {
        full.update(u);
    }
    full.estimate()
}
