use std::collections::HashSet;

use deltasketch::hashing::derive_seed;
use deltasketch::stream::{
    plant_stream, ExactState, PlantedItem, StreamConfig, StreamKind, Update,
};
use deltasketch::support::{support_sample, SparseRecovery, SupportConfig, SupportInstance};
use proptest::collection::vec;
use proptest::prelude::{prop_assert_eq, proptest};

fn strict(n: u64) -> StreamConfig {
    StreamConfig::new(n, 1 << 24, 1 << 10, StreamKind::StrictTurnstile).unwrap()
}

/// `survivors` indices kept with value 3 and as many inserted then deleted.
fn churned(sc: &StreamConfig, survivors: u64, seed: u64) -> Vec<Update> {
    let items: Vec<_> = (0..2 * survivors)
        .map(|i| {
            let idx = (i * 40_503 + seed * 17) % sc.n;
            if i % 2 == 0 {
                PlantedItem::new(idx, 3)
            } else {
                PlantedItem::new(idx, 0).with_churn(2)
            }
        })
        .collect();
    plant_stream(sc, &items, seed).unwrap()
}

#[test]
fn planted_thousand_returns_twenty_from_the_support() {
    let sc = strict(1 << 16);
    let cfg = SupportConfig::new(1 << 16, 20, 0.1, 4.0).unwrap();
    let mut enough = 0;
    for trial in 0..20 {
        let ups = churned(&sc, 1_000, trial);
        let oracle = ExactState::replay(sc, &ups).unwrap();
        let supp: HashSet<u64> = oracle.support().into_iter().collect();
        let out = support_sample(cfg, &ups, derive_seed(1, trial)).unwrap();
        assert!(out.indices.iter().all(|i| supp.contains(i)));
        if out.indices.len() >= 20 {
            enough += 1;
        }
    }
    assert!(enough >= 18, "{enough}/20");
}

#[test]
fn windowed_levels_carry_the_sample_when_the_top_is_dense() {
    // L0 = 4000 > s = 410: the top level cannot decode.
    let sc = strict(1 << 16);
    let cfg = SupportConfig::new(1 << 16, 2, 0.1, 4.0).unwrap();
    let mut enough = 0;
    for trial in 0..20 {
        let ups = churned(&sc, 4_000, trial);
        let oracle = ExactState::replay(sc, &ups).unwrap();
        let supp: HashSet<u64> = oracle.support().into_iter().collect();
        let out = support_sample(cfg, &ups, derive_seed(2, trial)).unwrap();
        assert!(out.indices.iter().all(|i| supp.contains(i)));
        if out.indices.len() >= 2 {
            enough += 1;
        }
    }
    assert!(enough >= 18, "{enough}/20");
}

#[test]
fn level_population_tracks_the_sampling_rate() {
    let n = 1u64 << 16;
    let cfg = SupportConfig::new(n, 1, 0.5, 1.0).unwrap();
    let support: Vec<u64> = (0..5_000).map(|i| i * 13).collect();
    for j in [6u32, 9, 12] {
        let trials = 200;
        let mut sum = 0.0;
        for t in 0..trials {
            let inst = SupportInstance::new(cfg, derive_seed(j as u64, t)).unwrap();
            sum += support.iter().filter(|&&i| inst.in_level(i, j)).count() as f64;
        }
        let mean = sum / trials as f64;
        let expect = support.len() as f64 * ((1u64 << j) + 1) as f64 / n as f64;
        // Pairwise independence: variance below the mean; the mean of 200 trials
        // is within 4 standard errors.
        let se = (expect / trials as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 4.0 * se + 0.5,
            "j={j}: {mean} vs {expect}"
        );
    }
}

proptest! {
    #[test]
    fn recovery_sketch_is_linear(
        a in vec((0u64..1 << 12, -50i64..50), 0..60),
        b in vec((0u64..1 << 12, -50i64..50), 0..60),
        seed in 0u64..1_000,
    ) {
        let mut sa = SparseRecovery::new(1 << 12, 16, seed).unwrap();
        let mut sb = SparseRecovery::new(1 << 12, 16, seed).unwrap();
        let mut both = SparseRecovery::new(1 << 12, 16, seed).unwrap();
        for &(i, d) in a.iter().filter(|p| p.1 != 0) {
            sa.update(i, d);
            both.update(i, d);
        }
        for &(i, d) in b.iter().filter(|p| p.1 != 0) {
            sb.update(i, d);
            both.update(i, d);
        }
        sa.merge(&sb).unwrap();
        prop_assert_eq!(sa.cells(), both.cells());
    }
}
