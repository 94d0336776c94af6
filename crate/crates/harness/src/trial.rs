//! One trial: a single pass of the stream through a sketch and the oracle,
//! then a check of the sketch's contract against the oracle's answer.

use std::collections::HashSet;
use std::time::Instant;

use deltasketch::csss::{CsssConfig, CsssTable};
use deltasketch::hashing::derive_seed;
use deltasketch::heavy_hitters::{HeavyHitters, HhConfig};
use deltasketch::inner_product::{ip_estimate, IpConfig, IpSharedSeed, IpSketch};
use deltasketch::l0::{L0Config, L0Full};
use deltasketch::l1_estimator::{
    ClockKind, GeneralL1Config, GeneralL1Estimator, StrictL1Estimator,
};
use deltasketch::l1_sampler::{L1Sampler, L1SamplerConfig, SampleOutcome};
use deltasketch::stream::{ExactState, Norm, StreamKind, Update};
use deltasketch::support::{SupportConfig, SupportSampler};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};
use crate::spec::{AlgorithmSpec, ExperimentSpec, L1Mode, TrialStream};

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: u64,
    pub seed: u64,
    /// Oracle value the estimate is compared with.
    pub truth: Option<f64>,
    pub estimate: Option<f64>,
    /// Normalized error; see the per-algorithm notes in the README.
    pub error: Option<f64>,
    pub pass: bool,
    pub counter_bits: u32,
    /// Samples, retained rows or live levels held by the sketch.
    pub samples_stored: u64,
    /// α of the stream under the norm the algorithm assumes; absent when
    /// the final vector is zero.
    pub realized_alpha: Option<f64>,
    pub detail: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// What an algorithm arm hands back before the report is assembled.
struct Measured {
    truth: Option<f64>,
    estimate: Option<f64>,
    error: Option<f64>,
    pass: bool,
    counter_bits: u32,
    samples_stored: u64,
    detail: Value,
}

impl Measured {
    /// A trial whose sketch failed during the pass or at query time.
    fn failed(truth: Option<f64>, reason: impl ToString) -> Self {
        Self {
            truth,
            estimate: None,
            error: None,
            pass: false,
            counter_bits: 0,
            samples_stored: 0,
            detail: json!({ "failure": reason.to_string() }),
        }
    }
}

fn relative(estimate: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (estimate - truth).abs() / truth.abs()
    }
}

/// Runs trial `t` of `spec` on an already materialized stream.
///
/// Sketch construction errors abort the experiment; errors raised by an
/// update or a query only fail the trial.
pub fn run_trial(spec: &ExperimentSpec, t: u64, stream: &TrialStream) -> Result<TrialReport> {
    let seed = spec.trial_seed(t);
    let start = spec.timing.then(Instant::now);
    let mut oracle = ExactState::new(stream.config);
    let ups = &stream.updates;
    let apply = |oracle: &mut ExactState, u: Update| oracle.apply(u).map_err(HarnessError::from);

    let norm = match spec.algorithm {
        AlgorithmSpec::L0Est { .. } | AlgorithmSpec::SuppSample { .. } => Norm::L0,
        _ => Norm::L1,
    };

    let m = match &spec.algorithm {
        AlgorithmSpec::Hh { eps, alpha, mode } => {
            let mut cfg = HhConfig::new(&stream.config, *eps, *alpha)?;
            if let Some(mode) = mode {
                cfg = cfg.with_mode(*mode);
            }
            let mut hh = HeavyHitters::new(cfg, seed)?;
            let mut res = Ok(());
            for &u in ups {
                apply(&mut oracle, u)?;
                if res.is_ok() {
                    res = hh.update(u);
                }
            }
            match res.and_then(|()| hh.query()) {
                Ok(found) => hh_verdict(&oracle, *eps, found, &hh),
                Err(e) => Measured::failed(Some(oracle.l1() as f64), e),
            }
        }
        AlgorithmSpec::Csss { k, eps, alpha } => {
            let cfg = CsssConfig::new(stream.config.n, *k, *eps, *alpha)?;
            let mut table = CsssTable::new(cfg, seed)?;
            let mut res = Ok(());
            for &u in ups {
                apply(&mut oracle, u)?;
                if res.is_ok() {
                    res = table.update(u);
                }
            }
            match res.and_then(|()| table.query_all()) {
                Ok(ys) => csss_verdict(&oracle, &table, &ys),
                Err(e) => Measured::failed(Some(oracle.l1() as f64), e),
            }
        }
        AlgorithmSpec::Ip {
            eps,
            alpha,
            base,
            second,
        } => {
            let g_stream = second.materialize(t)?;
            if g_stream.config.n != stream.config.n {
                return Err(HarnessError::InvalidSpec(
                    "both inner-product streams need the same universe".into(),
                ));
            }
            let mut cfg = IpConfig::new(stream.config.n, *eps, *alpha)?;
            if let Some(s) = base {
                cfg = cfg.with_base(*s)?;
            }
            let shared = IpSharedSeed::new(cfg, derive_seed(seed, 0))?;
            let mut f = IpSketch::new(&shared, derive_seed(seed, 1))?;
            let mut g = IpSketch::new(&shared, derive_seed(seed, 2))?;
            let mut oracle_g = ExactState::new(g_stream.config);
            let mut res = Ok(());
            for &u in ups {
                apply(&mut oracle, u)?;
                if res.is_ok() {
                    res = f.update(u);
                }
            }
            for &u in &g_stream.updates {
                apply(&mut oracle_g, u)?;
                if res.is_ok() {
                    res = g.update(u);
                }
            }
            let truth = oracle.inner(&oracle_g) as f64;
            match res.and_then(|()| ip_estimate(&f, &g)) {
                Ok(est) => {
                    let scale = oracle.l1() as f64 * oracle_g.l1() as f64;
                    let err = if scale == 0.0 {
                        (est - truth).abs()
                    } else {
                        (est - truth).abs() / scale
                    };
                    Measured {
                        truth: Some(truth),
                        estimate: Some(est),
                        error: Some(err),
                        pass: err <= *eps,
                        counter_bits: f.counter_bits().max(g.counter_bits()),
                        samples_stored: 0,
                        detail: json!({ "l1_f": oracle.l1(), "l1_g": oracle_g.l1() }),
                    }
                }
                Err(e) => Measured::failed(Some(truth), e),
            }
        }
        AlgorithmSpec::L1Sample { eps, alpha, delta } => {
            let mut cfg = L1SamplerConfig::new(stream.config.n, *eps, *alpha)?;
            if stream.config.kind == StreamKind::GeneralTurnstile {
                cfg.general = true;
                cfg.m_max = stream.config.m_max;
            }
            if !(*delta > 0.0 && *delta < 1.0) {
                return Err(HarnessError::InvalidSpec("delta must lie in (0, 1)".into()));
            }
            let mut samplers = (0..cfg.instances(*delta) as u64)
                .map(|c| L1Sampler::new(cfg, derive_seed(seed, c)))
                .collect::<deltasketch::Result<Vec<_>>>()?;
            let mut res = Ok(());
            for &u in ups {
                apply(&mut oracle, u)?;
                if res.is_ok() {
                    res = samplers.iter_mut().try_for_each(|s| s.update(u));
                }
            }
            let outcome = res.and_then(|()| first_sample(&samplers));
            let bits = samplers
                .iter()
                .map(|s| s.table().counter_bits())
                .max()
                .unwrap_or(0);
            let stored = samplers.iter().map(|s| s.table().samples_stored()).sum();
            match outcome {
                Ok(SampleOutcome::Found { index, estimate }) => {
                    let truth = oracle.frequency(index) as f64;
                    let err = relative(estimate, truth);
                    Measured {
                        truth: Some(truth),
                        estimate: Some(estimate),
                        error: Some(err),
                        pass: truth != 0.0 && err <= 2.0 * eps,
                        counter_bits: bits,
                        samples_stored: stored,
                        detail: json!({ "index": index, "l1": oracle.l1() }),
                    }
                }
                Ok(SampleOutcome::Fail(reason)) => Measured {
                    truth: None,
                    estimate: None,
                    error: None,
                    pass: false,
                    counter_bits: bits,
                    samples_stored: stored,
                    detail: json!({ "fail": reason }),
                },
                Err(e) => Measured::failed(None, e),
            }
        }
        AlgorithmSpec::L1Est {
            eps,
            alpha,
            delta,
            mode,
            base,
        } => match mode {
            L1Mode::Strict => {
                let mut est = match base {
                    Some(s) => StrictL1Estimator::with_base(*s, ClockKind::Morris, seed)?,
                    None => StrictL1Estimator::new(stream.config.n, *eps, *delta, *alpha, seed)?,
                };
                for &u in ups {
                    apply(&mut oracle, u)?;
                    est.update(u);
                }
                let truth = oracle.l1() as f64;
                match est.estimate() {
                    Ok(v) => Measured {
                        truth: Some(truth),
                        estimate: Some(v),
                        error: Some(relative(v, truth)),
                        pass: relative(v, truth) <= *eps,
                        counter_bits: est.counter_bits(),
                        samples_stored: est.peak_samples(),
                        detail: Value::Null,
                    },
                    Err(e) => Measured::failed(Some(truth), e),
                }
            }
            L1Mode::General => {
                let mut cfg =
                    GeneralL1Config::new(stream.config.n, stream.config.m_max, *eps, *alpha)?;
                cfg.delta = *delta;
                let mut est = GeneralL1Estimator::new(cfg, seed)?;
                let mut res = Ok(());
                for &u in ups {
                    apply(&mut oracle, u)?;
                    if res.is_ok() {
                        res = est.update(u);
                    }
                }
                let truth = oracle.l1() as f64;
                match res.and_then(|()| est.estimate()) {
                    // The contract is (1 ± O(eps)); the check uses 2 eps.
                    Ok(v) => Measured {
                        truth: Some(truth),
                        estimate: Some(v),
                        error: Some(relative(v, truth)),
                        pass: relative(v, truth) <= 2.0 * eps,
                        counter_bits: est.counter_bits(),
                        samples_stored: 0,
                        detail: Value::Null,
                    },
                    Err(e) => Measured::failed(Some(truth), e),
                }
            }
        },
        AlgorithmSpec::L0Est { eps, alpha, c_k } => {
            let mut cfg = L0Config::new(&stream.config, *eps, *alpha)?;
            if let Some(c) = c_k {
                cfg.c_k = *c;
                cfg.validate()?;
            }
            let mut full = L0Full::new(cfg, seed)?;
            for &u in ups {
                apply(&mut oracle, u)?;
                full.update(u);
            }
            let truth = oracle.l0() as f64;
            match full.estimate() {
                Ok(e) => Measured {
                    truth: Some(truth),
                    estimate: Some(e.value),
                    error: Some(relative(e.value, truth)),
                    pass: relative(e.value, truth) <= *eps,
                    counter_bits: full.counter_bits(),
                    samples_stored: full.peak_rows() as u64,
                    detail: json!({ "branch": e.branch, "bins_per_row": cfg.k() }),
                },
                Err(e) => Measured {
                    counter_bits: full.counter_bits(),
                    samples_stored: full.peak_rows() as u64,
                    ..Measured::failed(Some(truth), e)
                },
            }
        }
        AlgorithmSpec::SuppSample { k, delta, alpha } => {
            let cfg = SupportConfig::new(stream.config.n, *k, *delta, *alpha)?;
            let mut sampler = SupportSampler::new(cfg, seed)?;
            let mut res = Ok(());
            for &u in ups {
                apply(&mut oracle, u)?;
                if res.is_ok() {
                    res = sampler.update(u);
                }
            }
            let truth = oracle.l0() as f64;
            match res {
                Ok(()) => {
                    let out = sampler.query();
                    let support: HashSet<u64> = oracle.support().into_iter().collect();
                    let outside = out.indices.iter().filter(|i| !support.contains(i)).count();
                    let want = (*k as u64).min(oracle.l0());
                    let live: usize = sampler
                        .instances()
                        .iter()
                        .map(|i| i.live_levels().len())
                        .sum();
                    Measured {
                        truth: Some(truth),
                        estimate: Some(out.indices.len() as f64),
                        error: Some(outside as f64),
                        pass: outside == 0 && out.indices.len() as u64 >= want,
                        counter_bits: 0,
                        samples_stored: live as u64,
                        detail: json!({
                            "returned": out.indices.len(),
                            "outside_support": outside,
                            "decoded_levels": out.decoded_levels,
                        }),
                    }
                }
                Err(e) => Measured::failed(Some(truth), e),
            }
        }
    };

    let alpha = oracle.alpha_lp(norm);
    Ok(TrialReport {
        trial: t,
        seed,
        truth: m.truth,
        estimate: m.estimate,
        error: m.error.filter(|e| e.is_finite()),
        pass: m.pass,
        counter_bits: m.counter_bits,
        samples_stored: m.samples_stored,
        realized_alpha: alpha.is_finite().then(|| alpha.as_f64()),
        detail: m.detail,
        wall_ms: start.map(|s| s.elapsed().as_secs_f64() * 1e3),
    })
}

fn first_sample(samplers: &[L1Sampler]) -> deltasketch::Result<SampleOutcome> {
    let mut last = None;
    for s in samplers {
        let o = s.query()?;
        if o.found().is_some() {
            return Ok(o);
        }
        last = Some(o);
    }
    Ok(last.unwrap_or(SampleOutcome::Fail(
        deltasketch::l1_sampler::FailReason::EmptyStream,
    )))
}

/// Every item with `|f_i| >= eps ||f||_1` returned; none below `eps/2`.
fn hh_verdict(oracle: &ExactState, eps: f64, found: Vec<u64>, hh: &HeavyHitters) -> Measured {
    let l1 = oracle.l1() as f64;
    let freqs = oracle.frequencies();
    let heavy: Vec<u64> = freqs
        .iter()
        .filter(|&&(_, f)| f.unsigned_abs() as f64 >= eps * l1 && f != 0)
        .map(|&(i, _)| i)
        .collect();
    let found_set: HashSet<u64> = found.iter().copied().collect();
    let missing: Vec<u64> = heavy
        .iter()
        .copied()
        .filter(|i| !found_set.contains(i))
        .collect();
    let spurious: Vec<u64> = found
        .iter()
        .copied()
        .filter(|&i| (oracle.frequency(i).unsigned_abs() as f64) < eps / 2.0 * l1)
        .collect();
    let violations = missing.len() + spurious.len();
    Measured {
        truth: Some(heavy.len() as f64),
        estimate: Some(found.len() as f64),
        error: Some(violations as f64),
        pass: violations == 0,
        counter_bits: hh.table().counter_bits(),
        samples_stored: hh.table().samples_stored(),
        detail: json!({ "returned": found, "missing": missing, "spurious": spurious }),
    }
}

/// `|y_i - f_i| <= 2 (Err_k / sqrt k + eps ||f||_1)` for every `i`, and no
/// counter beyond the saturation bound.
fn csss_verdict(oracle: &ExactState, table: &CsssTable, ys: &[i64]) -> Measured {
    let cfg = table.config();
    let l1 = oracle.l1() as f64;
    let worst = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| (y - oracle.frequency(i as u64)).unsigned_abs())
        .max()
        .unwrap_or(0) as f64;
    let tail = oracle.tail_error(cfg.k);
    let bound = 2.0 * (tail / (cfg.k as f64).sqrt() + cfg.eps * l1);
    let saturated = table.max_counter() > cfg.saturation_bound();
    Measured {
        truth: Some(l1),
        estimate: None,
        error: Some(if l1 == 0.0 { worst } else { worst / l1 }),
        pass: worst <= bound && !saturated,
        counter_bits: table.counter_bits(),
        samples_stored: table.samples_stored(),
        detail: json!({
            "max_abs_error": worst,
            "bound": bound,
            "tail_error": tail,
            "max_counter": table.max_counter(),
        }),
    }
}
