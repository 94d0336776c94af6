//! Synthetic α-property streams.
//!
//! Generation first fixes the final frequency vector and the churn (extra
//! insert/delete pairs), then interleaves the unit mass in random order while
//! keeping every strict-turnstile prefix nonnegative.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Alpha, ExactState, Norm, StreamConfig, StreamKind, Update};
use crate::error::{Result, SketchError};
use crate::hashing::{derive_seed, seeded_rng, SketchRng};

/// Distribution of the final frequency vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Uniform,
    Zipf,
    /// One item holds half of the final mass.
    SingleHeavy,
    /// Churn lands on extra items that cancel to zero early in the stream.
    AdversarialCancel,
}

/// Parameters for [`generate_stream`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub config: StreamConfig,
    pub target_alpha: f64,
    pub norm: Norm,
    /// Unit-expanded length `sum |delta|`.
    pub length: u64,
    pub shape: Shape,
    pub seed: u64,
    /// Final support size; derived from `length` when absent.
    #[serde(default)]
    pub support: Option<u64>,
    /// Fraction of the mass that is deletions; the largest value allowed by
    /// the α bound when absent.
    #[serde(default)]
    pub deletion_fraction: Option<f64>,
}

impl GenSpec {
    /// Spec with the support and deletion fraction left to their defaults.
    pub fn new(
        config: StreamConfig,
        target_alpha: f64,
        norm: Norm,
        length: u64,
        shape: Shape,
        seed: u64,
    ) -> Self {
        Self {
            config,
            target_alpha,
            norm,
            length,
            shape,
            seed,
            support: None,
            deletion_fraction: None,
        }
    }
}

/// A generated stream together with its realized α values.
#[derive(Debug, Clone)]
pub struct GeneratedStream {
    pub config: StreamConfig,
    pub updates: Vec<Update>,
    pub norm: Norm,
    pub realized_alpha: Alpha,
    pub realized_strong_alpha: Alpha,
    pub seed: u64,
}

/// One coordinate of a planted stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedItem {
    pub index: u64,
    /// Final frequency.
    pub value: i64,
    /// Extra insert/delete unit pairs that cancel out.
    #[serde(default)]
    pub churn: u64,
    /// Confine the item's updates to the first quarter of the stream.
    #[serde(default)]
    pub early: bool,
}

impl PlantedItem {
    pub fn new(index: u64, value: i64) -> Self {
        Self {
            index,
            value,
            churn: 0,
            early: false,
        }
    }

    pub fn with_churn(mut self, churn: u64) -> Self {
        self.churn = churn;
        self
    }

    pub fn early(mut self) -> Self {
        self.early = true;
        self
    }
}

const ZIPF_EXPONENT: f64 = 1.1;
const EARLY_WINDOW: f64 = 0.25;

pub fn generate_stream(spec: &GenSpec) -> Result<GeneratedStream> {
    let cfg = spec.config;
    cfg.validate()?;
    if !(spec.target_alpha >= 1.0) || !spec.target_alpha.is_finite() {
        return Err(SketchError::param(
            "target_alpha",
            "must be a finite value >= 1",
        ));
    }
    if spec.length == 0 {
        return Err(SketchError::param("length", "must be positive"));
    }
    let alpha = spec.target_alpha;
    let d = deletion_fraction(spec)?;
    let churn = (d * spec.length as f64).floor() as u64;
    let final_mass = spec.length - 2 * churn;

    let support = spec
        .support
        .unwrap_or_else(|| (final_mass.div_ceil(8)).clamp(1, cfg.n / 2));
    if support == 0 || support > final_mass || support > cfg.n {
        return Err(SketchError::Infeasible(format!(
            "support {support} does not fit final mass {final_mass} in universe {}",
            cfg.n
        )));
    }
    let cancelled = match (spec.norm, spec.shape) {
        (Norm::L0, _) => (((alpha - 1.0) * support as f64).floor() as u64)
            .min(churn)
            .min(cfg.n - support),
        (Norm::L1, Shape::AdversarialCancel) => churn.div_ceil(4).min(cfg.n - support),
        (Norm::L1, _) => 0,
    };
    if churn > 0 && cancelled == 0 && spec.shape == Shape::AdversarialCancel {
        return Err(SketchError::Infeasible(
            "no room for cancelling items".into(),
        ));
    }

    let mut rng = seeded_rng(derive_seed(spec.seed, 0x6765_6e));
    let chosen = sample(&mut rng, cfg.n as usize, (support + cancelled) as usize);
    let mut indices: Vec<u64> = chosen.into_iter().map(|i| i as u64).collect();
    let cancelled_idx = indices.split_off(support as usize);

    let weights = shape_weights(spec.shape, support as usize);
    let values = apportion(final_mass - support, &weights, &mut rng);
    let mut items: Vec<PlantedItem> = indices
        .iter()
        .zip(&values)
        .map(|(&index, &extra)| {
            let magnitude = (1 + extra) as i64;
            let value = if cfg.kind == StreamKind::GeneralTurnstile && rng.random_bool(0.5) {
                -magnitude
            } else {
                magnitude
            };
            PlantedItem::new(index, value)
        })
        .collect();

    let mut remaining = churn;
    let mut dead: Vec<PlantedItem> = cancelled_idx
        .iter()
        .map(|&index| {
            let mut it = PlantedItem::new(index, 0).with_churn(1);
            if spec.shape == Shape::AdversarialCancel {
                it = it.early();
            }
            it
        })
        .collect();
    remaining -= dead.len() as u64;
    if spec.shape == Shape::AdversarialCancel && !dead.is_empty() {
        let even = vec![1.0; dead.len()];
        for (it, extra) in dead.iter_mut().zip(apportion(remaining, &even, &mut rng)) {
            it.churn += extra;
        }
    } else {
        for (it, extra) in items
            .iter_mut()
            .zip(apportion(remaining, &weights, &mut rng))
        {
            it.churn += extra;
        }
    }
    items.extend(dead);

    let updates = plant_stream(&cfg, &items, derive_seed(spec.seed, 0x706c_616e))?;
    let oracle = ExactState::replay(cfg, &updates)?;
    let realized_alpha = oracle.alpha_lp(spec.norm);
    if !realized_alpha.at_most(alpha) {
        return Err(SketchError::Infeasible(format!(
            "realized alpha {realized_alpha} exceeds target {alpha}"
        )));
    }
    Ok(GeneratedStream {
        config: cfg,
        updates,
        norm: spec.norm,
        realized_alpha,
        realized_strong_alpha: oracle.strong_alpha(),
        seed: spec.seed,
    })
}

fn deletion_fraction(spec: &GenSpec) -> Result<f64> {
    let alpha = spec.target_alpha;
    let requested = spec.deletion_fraction;
    if let Some(d) = requested {
        if !(0.0..0.5).contains(&d) {
            return Err(SketchError::param(
                "deletion_fraction",
                "must lie in [0, 0.5)",
            ));
        }
    }
    if spec.config.kind == StreamKind::InsertionOnly {
        return match requested {
            Some(d) if d > 0.0 => Err(SketchError::Infeasible(
                "deletions requested on an insertion-only stream".into(),
            )),
            _ => Ok(0.0),
        };
    }
    match spec.norm {
        Norm::L1 => {
            let max = (alpha - 1.0) / (2.0 * alpha);
            match requested {
                Some(d) if d > max + 1e-12 => Err(SketchError::Infeasible(format!(
                    "deletion fraction {d} forces alpha above {alpha}"
                ))),
                Some(d) => Ok(d),
                None => Ok(max),
            }
        }
        Norm::L0 => Ok(requested.unwrap_or(if alpha > 1.0 { 0.25 } else { 0.0 })),
    }
}

fn shape_weights(shape: Shape, support: usize) -> Vec<f64> {
    match shape {
        Shape::Uniform | Shape::AdversarialCancel => vec![1.0; support],
        Shape::Zipf => (0..support)
            .map(|r| 1.0 / ((r + 1) as f64).powf(ZIPF_EXPONENT))
            .collect(),
        Shape::SingleHeavy => {
            let mut w = vec![1.0; support];
            if support > 1 {
                w[0] = (support - 1) as f64;
            }
            w
        }
    }
}

/// Splits `total` units proportionally to `weights`; remainders go to
/// randomly drawn items.
fn apportion(total: u64, weights: &[f64], rng: &mut SketchRng) -> Vec<u64> {
    let mut out = vec![0u64; weights.len()];
    if weights.is_empty() || total == 0 {
        return out;
    }
    let sum: f64 = weights.iter().sum();
    let mut assigned = 0u64;
    for (o, w) in out.iter_mut().zip(weights) {
        *o = ((total as f64) * w / sum).floor() as u64;
        assigned += *o;
    }
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    for _ in assigned..total {
        let x = rng.random::<f64>() * sum;
        let j = cumulative
            .partition_point(|&c| c <= x)
            .min(weights.len() - 1);
        out[j] += 1;
    }
    out
}

struct Event {
    time: f64,
    deletion: bool,
    update: Update,
}

fn chunks(total: u64, max: u64, rng: &mut SketchRng) -> Vec<u64> {
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 {
        let c = if max == 1 {
            1
        } else {
            rng.random_range(1..=max).min(left)
        };
        out.push(c);
        left -= c;
    }
    out
}

/// Interleaves the planted items into one stream.
///
/// Insertion chunks land uniformly in each item's time window. For strict
/// streams every deletion chunk is placed after enough insertions of its
/// item to keep the prefix nonnegative.
pub fn plant_stream(
    config: &StreamConfig,
    items: &[PlantedItem],
    seed: u64,
) -> Result<Vec<Update>> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let mut events = Vec::new();
    for it in items {
        if it.index >= config.n {
            return Err(SketchError::IndexOutOfRange {
                index: it.index,
                n: config.n,
            });
        }
        let (ins, del) = if it.value >= 0 {
            (it.value as u64 + it.churn, it.churn)
        } else {
            (it.churn, it.value.unsigned_abs() + it.churn)
        };
        match config.kind {
            StreamKind::InsertionOnly if del > 0 => {
                return Err(SketchError::Infeasible(
                    "deletions on an insertion-only stream".into(),
                ))
            }
            StreamKind::StrictTurnstile if it.value < 0 => {
                return Err(SketchError::Infeasible(
                    "negative final value on a strict stream".into(),
                ))
            }
            _ => {}
        }
        let hi = if it.early { EARLY_WINDOW } else { 1.0 };
        let mut ins_chunks: Vec<(f64, u64)> = chunks(ins, config.max_delta, &mut rng)
            .into_iter()
            .map(|c| (rng.random_range(0.0..hi), c))
            .collect();
        ins_chunks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let del_chunks = chunks(del, config.max_delta, &mut rng);

        let del_times: Vec<f64> = if config.kind == StreamKind::StrictTurnstile {
            // k-th deletion chunk must follow the insertion chunk at which the
            // running insertion total first covers the running deletion total.
            let mut bounds = Vec::with_capacity(del_chunks.len());
            let (mut cum_del, mut cum_ins, mut j) = (0u64, 0u64, 0usize);
            for &c in &del_chunks {
                cum_del += c;
                while cum_ins < cum_del {
                    cum_ins += ins_chunks[j].1;
                    j += 1;
                }
                bounds.push(ins_chunks[j - 1].0);
            }
            let mut times: Vec<f64> = bounds.iter().map(|&lo| rng.random_range(lo..hi)).collect();
            times.sort_by(f64::total_cmp);
            times
        } else {
            del_chunks
                .iter()
                .map(|_| rng.random_range(0.0..hi))
                .collect()
        };

        for (time, c) in ins_chunks {
            events.push(Event {
                time,
                deletion: false,
                update: Update::new(it.index, c as i64),
            });
        }
        for (time, c) in del_times.into_iter().zip(del_chunks) {
            events.push(Event {
                time,
                deletion: true,
                update: Update::new(it.index, -(c as i64)),
            });
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.deletion.cmp(&b.deletion)));
    Ok(events.into_iter().map(|e| e.update).collect())
}
