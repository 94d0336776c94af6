//! Acceptance suite: one PASS/FAIL line per criterion, each checked at its
//! stated tolerance and time budget against the exact oracle.
//!
//! Runs without the libtest harness so the lines always reach stdout.
//! Criteria run one after another; the time budgets assume a single core.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use deltasketch::csss::{
    estimate_tail_error, preserving_rate, sampled_frequencies, CsssConfig, CsssTable,
};
use deltasketch::hashing::{derive_seed, seeded_rng, KWiseHash};
use deltasketch::l0::{L0Branch, L0Config};
use deltasketch::l1_estimator::MorrisCounter;
use deltasketch::l1_sampler::{l1_sample, L1Sampler, L1SamplerConfig};
use deltasketch::stream::{
    generate_stream, ExactState, GenSpec, Norm, PlantedItem, Shape, StreamConfig, StreamKind,
    Update,
};
use deltasketch_harness::{
    emit_tradeoff_table, run_experiment, AlgorithmSpec, ExperimentReport, ExperimentSpec, L1Mode,
    StreamSource,
};

struct Check {
    pass: bool,
    measured: String,
}

impl Check {
    fn new(pass: bool, measured: impl Into<String>) -> Self {
        Self {
            pass,
            measured: measured.into(),
        }
    }

    /// Conjunction of sub-checks, reported side by side.
    fn all(parts: Vec<Check>) -> Self {
        Self {
            pass: parts.iter().all(|c| c.pass),
            measured: parts
                .iter()
                .map(|c| c.measured.as_str())
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

fn strict(n: u64, m_max: u64) -> StreamConfig {
    StreamConfig::new(n, m_max, 1, StreamKind::StrictTurnstile).unwrap()
}

fn generated(
    config: StreamConfig,
    alpha: f64,
    norm: Norm,
    length: u64,
    shape: Shape,
    seed: u64,
) -> GenSpec {
    GenSpec::new(config, alpha, norm, length, shape, seed)
}

fn run(algorithm: AlgorithmSpec, stream: StreamSource, trials: u64, seed: u64) -> ExperimentReport {
    run_experiment(&ExperimentSpec::new(algorithm, stream, trials, seed)).expect("experiment runs")
}

fn passes(r: &ExperimentReport) -> usize {
    r.trials.iter().filter(|t| t.pass).count()
}

/// Uniform sampling at the preserving rate keeps every coordinate within
/// `eps ||f||_1`.
fn sampling_lemma() -> Check {
    let (n, eps, alpha) = (128u64, 0.1, 4.0);
    let g = generate_stream(&generated(
        strict(n, 100_000),
        alpha,
        Norm::L1,
        100_000,
        Shape::Zipf,
        1,
    ))
    .unwrap();
    let oracle = ExactState::replay(g.config, &g.updates).unwrap();
    let rate = preserving_rate(alpha, eps, 0.01, oracle.mass());
    let mut rng = seeded_rng(2);
    let l1 = oracle.l1() as f64;
    let good = (0..100)
        .filter(|_| {
            let s = sampled_frequencies(&g.updates, rate, &mut rng);
            (0..n).all(|i| {
                (s.get(&i).copied().unwrap_or(0.0) - oracle.frequency(i) as f64).abs() <= eps * l1
            })
        })
        .count();
    Check::new(
        good >= 95,
        format!("{good}/100 within eps*L1 at rate {rate:.3}"),
    )
}

fn csss_error() -> Check {
    let stream = generated(
        strict(1 << 12, 200_000),
        4.0,
        Norm::L1,
        200_000,
        Shape::Zipf,
        3,
    );
    let r = run(
        AlgorithmSpec::Csss {
            k: 64,
            eps: 0.1,
            alpha: 4.0,
        },
        StreamSource::Generated(stream),
        100,
        3,
    );
    let within = r
        .trials
        .iter()
        .filter(|t| {
            t.detail["max_abs_error"].as_f64().unwrap() <= t.detail["bound"].as_f64().unwrap()
        })
        .count();
    let cfg = CsssConfig::new(1 << 12, 64, 0.1, 4.0).unwrap();
    let saturated = r
        .trials
        .iter()
        .filter(|t| t.detail["max_counter"].as_u64().unwrap() > cfg.saturation_bound())
        .count();
    Check::new(
        within >= 90 && saturated == 0,
        format!("{within}/100 within bound, {saturated} trials over S^3"),
    )
}

fn heavy_hitters() -> Check {
    // L1 = 10000: 20%, two 12% items, eight 4.9% items and 168 light ones.
    let mut items = vec![
        PlantedItem::new(7, 2_000),
        PlantedItem::new(300, 1_200),
        PlantedItem::new(301, 1_200),
    ];
    items.extend((0..8).map(|j| PlantedItem::new(500 + j, 490)));
    items.extend((0..168).map(|j| PlantedItem::new(600 + j, 10)));
    let items: Vec<_> = items
        .into_iter()
        .map(|it| it.with_churn(it.value as u64 * 7 / 5))
        .collect();
    let r = run(
        AlgorithmSpec::Hh {
            eps: 0.1,
            alpha: 4.0,
            mode: None,
        },
        StreamSource::Planted {
            config: strict(1 << 10, 40_000),
            items,
            seed: 4,
        },
        100,
        4,
    );
    let violations: f64 = r.trials.iter().filter_map(|t| t.error).sum();
    let alpha = r
        .trials
        .iter()
        .filter_map(|t| t.realized_alpha)
        .fold(0.0, f64::max);
    Check::new(
        violations == 0.0 && passes(&r) == 100,
        format!("{violations} violations over 100 trials, alpha {alpha:.2}"),
    )
}

/// `Err <= v <= 45 sqrt(k) eps ||f||_1 + 20 Err`.
fn tail_error_estimator() -> Check {
    let (n, k, eps) = (1u64 << 12, 16usize, 0.02);
    let cfg = CsssConfig::new(n, k, eps, 4.0).unwrap();
    let mut good = 0;
    for t in 0..100u64 {
        let g = generate_stream(&generated(
            strict(n, 100_000),
            4.0,
            Norm::L1,
            100_000,
            Shape::Zipf,
            derive_seed(5, t),
        ))
        .unwrap();
        let oracle = ExactState::replay(g.config, &g.updates).unwrap();
        let mut a = CsssTable::new(cfg, derive_seed(6, 2 * t)).unwrap();
        let mut b = CsssTable::new(cfg, derive_seed(6, 2 * t + 1)).unwrap();
        for &u in &g.updates {
            a.update(u).unwrap();
            b.update(u).unwrap();
        }
        let l1 = oracle.l1() as f64;
        let v = estimate_tail_error(&a, &b, l1).unwrap();
        let err = oracle.tail_error(k);
        if err <= v && v <= 45.0 * (k as f64).sqrt() * eps * l1 + 20.0 * err {
            good += 1;
        }
    }
    Check::new(
        good >= 90,
        format!("{good}/100 inside [Err, 45 sqrt(k) eps L1 + 20 Err]"),
    )
}

fn inner_product() -> Check {
    let f = generated(
        strict(1 << 12, 100_000),
        4.0,
        Norm::L1,
        100_000,
        Shape::Uniform,
        7,
    );
    let g = generated(
        strict(1 << 12, 100_000),
        4.0,
        Norm::L1,
        100_000,
        Shape::Zipf,
        8,
    );
    let r = run(
        AlgorithmSpec::Ip {
            eps: 0.25,
            alpha: 4.0,
            base: None,
            second: StreamSource::Generated(g),
        },
        StreamSource::Generated(f),
        100,
        7,
    );
    let ok = passes(&r);
    Check::new(ok >= 75, format!("{ok}/100 within eps L1(f) L1(g)"))
}

fn l1_sampler() -> Check {
    // Final weights 10, 20, ..., 160 after 5 units of churn each.
    let ups: Vec<Update> = (0..16u64)
        .map(|i| Update::new(i, 10 * (i as i64 + 1) + 5))
        .chain((0..16u64).map(|i| Update::new(i, -5)))
        .collect();
    let cfg = L1SamplerConfig::new(16, 0.25, 2.0).unwrap();
    let total: f64 = (1..=16).map(|w| 10.0 * w as f64).sum();

    let mut counts = [0u64; 16];
    let (mut found, mut close, mut seed) = (0u64, 0u64, 0u64);
    while found < 10_000 {
        let mut s = L1Sampler::new(cfg, derive_seed(9, seed)).unwrap();
        seed += 1;
        ups.iter().for_each(|&u| s.update(u).unwrap());
        if let Some((i, est)) = s.query().unwrap().found() {
            let truth = 10.0 * (i + 1) as f64;
            counts[i as usize] += 1;
            found += 1;
            close += ((est - truth).abs() <= 0.5 * truth) as u64;
        }
    }
    let tv = (0..16)
        .map(|i| (counts[i] as f64 / found as f64 - 10.0 * (i + 1) as f64 / total).abs())
        .sum::<f64>()
        / 2.0;
    let close_frac = close as f64 / found as f64;
    let calls = (0..100u64)
        .filter(|&c| {
            l1_sample(&ups, cfg, 0.1, derive_seed(10, c))
                .unwrap()
                .found()
                .is_some()
        })
        .count();
    Check::all(vec![
        Check::new(tv <= 0.08, format!("TV {tv:.4} over 10^4 successes")),
        Check::new(
            close_frac >= 0.95,
            format!("{:.1}% estimates within 2 eps", 100.0 * close_frac),
        ),
        Check::new(calls >= 90, format!("{calls}/100 calls succeed")),
    ])
}

fn strict_l1() -> Check {
    let stream = generated(
        strict(1 << 16, 100_000),
        4.0,
        Norm::L1,
        100_000,
        Shape::Zipf,
        11,
    );
    let r = run(
        AlgorithmSpec::L1Est {
            eps: 0.2,
            alpha: 4.0,
            delta: 0.1,
            mode: L1Mode::Strict,
            base: None,
        },
        StreamSource::Generated(stream),
        100,
        11,
    );
    let ok = passes(&r);

    let (t, runs) = (10_000u64, 10_000u64);
    let mut rng = seeded_rng(12);
    let mut sum = 0.0;
    for _ in 0..runs {
        let mut c = MorrisCounter::new();
        (0..t).for_each(|_| c.tick(&mut rng));
        sum += c.estimate() as f64;
    }
    let mean = sum / runs as f64;
    let dev = (mean - t as f64).abs() / t as f64;
    Check::all(vec![
        Check::new(ok >= 90, format!("{ok}/100 within 1 +- eps")),
        Check::new(
            dev <= 0.05,
            format!("Morris mean {mean:.0} ({:.2}% off)", 100.0 * dev),
        ),
    ])
}

fn general_l1() -> Check {
    // Every unit update touches all 217 Cauchy rows, so the stream is kept
    // short enough for the time budget.
    let config = StreamConfig::new(1 << 12, 10_000, 1, StreamKind::GeneralTurnstile).unwrap();
    let stream = generated(config, 4.0, Norm::L1, 10_000, Shape::Zipf, 13);
    let r = run(
        AlgorithmSpec::L1Est {
            eps: 0.25,
            alpha: 4.0,
            delta: 0.1,
            mode: L1Mode::General,
            base: None,
        },
        StreamSource::Generated(stream),
        100,
        13,
    );
    let ok = passes(&r);
    Check::new(ok >= 60, format!("{ok}/100 within 1 +- 2 eps"))
}

fn l0_regime(
    n: u64,
    support: u64,
    length: u64,
    deletion: f64,
    trials: u64,
    seed: u64,
) -> ExperimentReport {
    let mut g = generated(
        strict(n, length),
        4.0,
        Norm::L0,
        length,
        Shape::Uniform,
        seed,
    );
    g.support = Some(support);
    g.deletion_fraction = Some(deletion);
    run(
        AlgorithmSpec::L0Est {
            eps: 0.25,
            alpha: 4.0,
            c_k: None,
        },
        StreamSource::Generated(g),
        trials,
        seed,
    )
}

fn branch_count(r: &ExperimentReport, branch: L0Branch) -> usize {
    let name = serde_json::to_value(branch).unwrap();
    r.trials
        .iter()
        .filter(|t| t.detail["branch"] == name)
        .count()
}

fn l0_driver() -> Check {
    let k = L0Config::new(&strict(1 << 19, 1 << 20), 0.25, 4.0)
        .unwrap()
        .k();

    let exact = l0_regime(1 << 16, 5, 100, 0.25, 100, 14);
    let exact_ok = exact
        .trials
        .iter()
        .filter(|t| t.estimate == Some(5.0))
        .count();

    let small = l0_regime(1 << 16, k / 64, 2_000, 0.25, 100, 15);
    let small_ok = passes(&small);

    // 64 K survivors plus cancelled items in a universe of 2^19.
    let main = l0_regime(1 << 19, 64 * k, 330_000, 0.1, 100, 16);
    let main_ok = passes(&main);

    // Occupied cells after A balls in K bins against K (1 - (1 - 1/K)^A).
    let cfg = L0Config::new(&strict(1 << 20, 1 << 20), 0.25, 1.0).unwrap();
    let worst = [100u64, 150, k / 20]
        .into_iter()
        .map(|a| {
            let expect = k as f64 * (1.0 - (1.0 - 1.0 / k as f64).powi(a as i32));
            let trials = 400u64;
            let sum: usize = (0..trials)
                .map(|t| {
                    let h = KWiseHash::from_seed(cfg.k_ind(), k, derive_seed(a, t));
                    (0..a)
                        .map(|i| h.eval(i * 7_919 + t))
                        .collect::<HashSet<_>>()
                        .len()
                })
                .sum();
            (sum as f64 / trials as f64 - expect).abs() / expect
        })
        .fold(0.0, f64::max);

    Check::all(vec![
        Check::new(
            exact_ok == 100 && branch_count(&exact, L0Branch::Exact) == 100,
            format!("L0=5: {exact_ok}/100 exact"),
        ),
        Check::new(
            small_ok >= 70 && branch_count(&small, L0Branch::Small) == 100,
            format!("L0=K/64: {small_ok}/100 within eps"),
        ),
        Check::new(
            main_ok >= 60 && branch_count(&main, L0Branch::Main) == 100,
            format!("L0=64K={}: {main_ok}/100 within eps", 64 * k),
        ),
        Check::new(
            worst <= 0.02,
            format!("balls-in-bins mean off by {:.2}%", 100.0 * worst),
        ),
    ])
}

fn support_sampler() -> Check {
    let mut g = generated(
        strict(1 << 16, 8_000),
        4.0,
        Norm::L0,
        8_000,
        Shape::Uniform,
        17,
    );
    g.support = Some(1_000);
    let algorithm = AlgorithmSpec::SuppSample {
        k: 20,
        delta: 0.1,
        alpha: 4.0,
    };
    let r = run(algorithm.clone(), StreamSource::Generated(g), 100, 17);
    let outside: f64 = r.trials.iter().filter_map(|t| t.error).sum();
    let enough = passes(&r);

    let items: Vec<_> = (0..200u64)
        .map(|i| PlantedItem::new(i * 311 + 5, 1 + (i % 7) as i64).with_churn(3))
        .collect();
    let sparse = run(
        algorithm,
        StreamSource::Planted {
            config: strict(1 << 16, 10_000),
            items,
            seed: 18,
        },
        100,
        18,
    );
    let exact = sparse
        .trials
        .iter()
        .filter(|t| t.error == Some(0.0) && t.estimate == t.truth)
        .count();
    Check::all(vec![
        Check::new(
            outside == 0.0,
            format!("{outside} indices outside the support"),
        ),
        Check::new(enough >= 90, format!("{enough}/100 return >= 20")),
        Check::new(exact == 100, format!("sparse stream: {exact}/100 exact")),
    ])
}

/// Counter widths of csss and retained rows of l0 across alpha, with the
/// final norm held fixed so the stream grows with alpha.
fn space_sweep() -> Check {
    let alphas = [1.0, 2.0, 4.0, 8.0, 16.0];
    let mut summaries = Vec::new();
    for &alpha in &alphas {
        let length = (25_000.0 * alpha) as u64;
        let s = generated(
            strict(1 << 12, length),
            alpha,
            Norm::L1,
            length,
            Shape::Zipf,
            19,
        );
        summaries.push(
            run(
                AlgorithmSpec::Csss {
                    k: 16,
                    eps: 0.1,
                    alpha,
                },
                StreamSource::Generated(s),
                3,
                19,
            )
            .summary,
        );
    }
    for &alpha in &alphas {
        // A universe of 2^40 keeps the widest row window clear of the edges.
        let length = (8_000.0 * alpha) as u64;
        let mut s = generated(
            strict(1 << 40, length),
            alpha,
            Norm::L0,
            length,
            Shape::Uniform,
            20,
        );
        s.support = Some(2_000);
        s.deletion_fraction = Some(if alpha > 1.0 { 0.25 } else { 0.0 });
        summaries.push(
            run(
                AlgorithmSpec::L0Est {
                    eps: 0.25,
                    alpha,
                    c_k: None,
                },
                StreamSource::Generated(s),
                3,
                20,
            )
            .summary,
        );
    }
    let mut csv = Vec::new();
    emit_tradeoff_table(&summaries, &mut csv).unwrap();
    let table = String::from_utf8(csv).unwrap();
    println!("{}", table.trim_end().replace('\n', "\n    "));

    let column = |alg: &str, col: usize| -> Vec<u64> {
        table
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[0] == alg)
            .map(|f| f[col].parse().unwrap())
            .collect()
    };
    let growing = |v: &[u64]| v.windows(2).all(|w| w[0] <= w[1]) && v[0] < v[v.len() - 1];
    let bits = column("csss", 4);
    let rows = column("l0est", 5);
    Check::all(vec![
        Check::new(growing(&bits), format!("csss counter bits {bits:?}")),
        Check::new(growing(&rows), format!("l0 retained rows {rows:?}")),
    ])
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("sampling lemma", 10, sampling_lemma),
        ("csss error", 60, csss_error),
        ("heavy hitters", 30, heavy_hitters),
        ("tail-error estimator", 60, tail_error_estimator),
        ("inner product", 60, inner_product),
        ("l1 sampler", 120, l1_sampler),
        ("strict l1 estimator", 60, strict_l1),
        ("general l1 estimator", 120, general_l1),
        ("l0 full driver", 180, l0_driver),
        ("support sampler", 120, support_sampler),
        ("space-proxy sweep", 120, space_sweep),
    ];
    let mut failed = 0;
    for (no, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let c = check();
        let took = start.elapsed();
        let in_time = took < Duration::from_secs(budget);
        let pass = c.pass && in_time;
        failed += !pass as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1} s of {budget} s{}]",
            if pass { "PASS" } else { "FAIL" },
            no + 1,
            c.measured,
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" },
        );
    }
    println!("acceptance: {} of 11 criteria pass", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
