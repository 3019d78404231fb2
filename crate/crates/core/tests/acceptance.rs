//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see the lines for passing
//! tests too).
//!
//! The heavy artifact — 50 seeded scenarios at production-shape
//! parameters (101 agents, 101 grid points, 1024-bit pointwise keys,
//! 2048-bit block keys) — is computed once and shared between the
//! clearing-equivalence and block-equivalence criteria.

use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use ptes_core::bench::{ratio_summary, run_bench, BenchMode, BenchParams, BenchRole};
use ptes_core::market::PriceGrid;
use ptes_core::numtheory::mod_exp;
use ptes_core::packing::{pack, packed_alpha_bound, unpack, PackSpec};
use ptes_core::paillier::{
    add_ciphertexts, decrypt, encrypt, keygen, BetaMode, KeyId, PaillierKeySet,
};
use ptes_core::protocol::{
    run_auction_block, run_auction_pointwise, ClearingResult, ClearingRule, LinkId,
    MitigationPolicy, Population, ProtocolConfig,
};
use ptes_core::signature::{auth_receive, auth_send, VerifyOutcome};
use ptes_core::simulator::{
    run_scenario, AttackKind, AttackRule, AttackScenario, ChannelSet, CycleSelector, LinkSelector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

fn criterion(number: u32, name: &str, body: impl FnOnce() + UnwindSafe) {
    let started = Instant::now();
    let outcome = catch_unwind(body);
    let elapsed = started.elapsed().as_secs_f64();
    match &outcome {
        Ok(()) => println!("ACCEPTANCE {number} ({name}): PASS [{elapsed:.1}s]"),
        Err(_) => println!("ACCEPTANCE {number} ({name}): FAIL [{elapsed:.1}s]"),
    }
    if let Err(payload) = outcome {
        resume_unwind(payload);
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------
// Shared 50-scenario equivalence artifact (criteria 1 and 2)
// ---------------------------------------------------------------------

const SCENARIOS: u64 = 50;

struct ScenarioArtifacts {
    plain_supply: Vec<u64>,
    plain_demand: Vec<u64>,
    plain_index: u32,
    plain_price_units: u64,
    plain_lambda: f64,
    pointwise: ClearingResult,
    block: ClearingResult,
}

fn equivalence_config(seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        grid: PriceGrid::with_points(-0.01, 0.01, 101, 2, 2).unwrap(),
        n_suppliers: 1,
        n_customers: 100,
        delta_s: 650.0,
        delta_d: 6.0,
        key_bits: 1024,
        block_mode: false,
        signing_enabled: false,
        mitigation_policy: MitigationPolicy::LastGood,
        price_history_window: 3,
        clearing: ClearingRule::TwoSided,
        supplier_power: (250.0, 600.0),
        customer_power: (0.5, 5.5),
        supplier_thresholds: None,
        customer_thresholds: None,
        seed,
    }
}

fn equivalence_suite() -> &'static Vec<ScenarioArtifacts> {
    static SUITE: OnceLock<Vec<ScenarioArtifacts>> = OnceLock::new();
    SUITE.get_or_init(|| {
        (0..SCENARIOS)
            .into_par_iter()
            .map(|i| {
                let cfg = equivalence_config(1000 + i);
                let population = Population::generate(&cfg, 1).expect("population");
                let (supply, demand, outcome) =
                    population.plaintext_baseline(&cfg).expect("baseline");

                let mut channels = ChannelSet::clean(cfg.n_agents());
                let pointwise =
                    run_auction_pointwise(&cfg, &population, &mut channels).expect("pointwise");

                // The packed block spans ~1680 bits, so the block run
                // needs a longer key; results are key-independent once
                // the bound holds, which is exactly what criterion 2
                // checks.
                let mut block_cfg = cfg.clone();
                block_cfg.key_bits = 2048;
                let mut channels = ChannelSet::clean(cfg.n_agents());
                let block =
                    run_auction_block(&block_cfg, &population, &mut channels).expect("block");

                ScenarioArtifacts {
                    plain_supply: supply.values,
                    plain_demand: demand.values,
                    plain_index: outcome.index,
                    plain_price_units: outcome.price_units,
                    plain_lambda: outcome.lambda_star,
                    pointwise,
                    block,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_1_clearing_equivalence() {
    criterion(1, "clearing equivalence, 50 scenarios", || {
        let suite = equivalence_suite();
        assert_eq!(suite.len(), SCENARIOS as usize);
        for (i, s) in suite.iter().enumerate() {
            assert!(!s.pointwise.failed, "scenario {i} failed");
            assert_eq!(
                s.pointwise.demand_aggregate, s.plain_demand,
                "scenario {i}: demand aggregates differ"
            );
            assert_eq!(
                s.pointwise.supply_aggregate, s.plain_supply,
                "scenario {i}: supply aggregates differ"
            );
            assert_eq!(s.pointwise.index, s.plain_index, "scenario {i}: index");
            assert_eq!(
                s.pointwise.price_units, s.plain_price_units,
                "scenario {i}: price units"
            );
            assert_eq!(
                s.pointwise.lambda_star, s.plain_lambda,
                "scenario {i}: lambda*"
            );
        }
    });
}

#[test]
fn criterion_2_block_mode_equivalence() {
    criterion(2, "block-mode equivalence and operation counts", || {
        let suite = equivalence_suite();
        for (i, s) in suite.iter().enumerate() {
            assert_eq!(
                s.block.supply_aggregate, s.pointwise.supply_aggregate,
                "scenario {i}: supply"
            );
            assert_eq!(
                s.block.demand_aggregate, s.pointwise.demand_aggregate,
                "scenario {i}: demand"
            );
            assert_eq!(s.block.index, s.pointwise.index, "scenario {i}: index");
            assert_eq!(
                s.block.price_units, s.pointwise.price_units,
                "scenario {i}: price units"
            );
            // One encryption per agent, two aggregations, two
            // decryptions, independent of the 101-point grid.
            assert_eq!(s.block.counters.encryptions, 101, "scenario {i}");
            assert_eq!(s.block.counters.aggregations, 2, "scenario {i}");
            assert_eq!(s.block.counters.decryptions, 2, "scenario {i}");
        }
    });
}

// ---------------------------------------------------------------------
// Criterion 3: attack detection
// ---------------------------------------------------------------------

#[test]
fn criterion_3_attack_detection() {
    criterion(3, "attack detection over all link groups", || {
        let cfg = ProtocolConfig {
            grid: PriceGrid::with_points(-0.01, 0.01, 101, 2, 2).unwrap(),
            n_suppliers: 2,
            n_customers: 8,
            delta_s: 60.0,
            delta_d: 9.0,
            key_bits: 512,
            block_mode: false,
            signing_enabled: true,
            mitigation_policy: MitigationPolicy::LastGood,
            price_history_window: 3,
            clearing: ClearingRule::TwoSided,
            supplier_power: (10.0, 55.0),
            customer_power: (1.0, 8.0),
            supplier_thresholds: None,
            customer_thresholds: None,
            seed: 77,
        };
        // Cycle 1 runs clean so that every mitigation has history; the
        // remaining cycles are attacked with every kind the index stamps
        // defend against, across all three link groups.
        let attacked_cycles = CycleSelector::Cycles(vec![2, 3, 4, 5]);
        let rule = |links, kind, fraction| AttackRule {
            cycles: attacked_cycles.clone(),
            links,
            kind,
            fraction,
        };
        let scenario = AttackScenario {
            seed: 4242,
            rules: vec![
                rule(LinkSelector::All, AttackKind::Tamper, 0.25),
                rule(LinkSelector::All, AttackKind::Forge, 0.15),
                rule(LinkSelector::AgentToTp, AttackKind::Replay, 0.15),
                rule(LinkSelector::TpToCo, AttackKind::Replay, 0.15),
                rule(LinkSelector::AgentToTp, AttackKind::Reorder, 0.10),
                rule(LinkSelector::TpToCo, AttackKind::Reorder, 0.10),
            ],
        };
        let report = run_scenario(&cfg, &scenario, 5, false).expect("scenario");

        assert!(report.failed_cycles.is_empty(), "mitigation kept cycles alive");
        assert!(
            report.attacked_messages >= 2000,
            "need >= 2000 attacked, got {}",
            report.attacked_messages
        );
        assert!(
            report.clean_messages >= 2000,
            "need >= 2000 clean, got {}",
            report.clean_messages
        );
        assert_eq!(report.detection_rate, Some(1.0), "detection rate");
        assert_eq!(report.false_alarm_rate, Some(0.0), "false-alarm rate");

        // Spanning check: every attack kind executed, every link group hit.
        for kind in [
            AttackKind::Tamper,
            AttackKind::Replay,
            AttackKind::Reorder,
            AttackKind::Forge,
        ] {
            assert!(
                report.messages.iter().any(|m| m.attacked == Some(kind)),
                "no executed {kind:?}"
            );
        }
        let hit = |f: fn(&LinkId) -> bool| {
            report
                .messages
                .iter()
                .any(|m| m.attacked.is_some() && f(&m.link))
        };
        assert!(hit(|l| matches!(l, LinkId::AgentToTp(_))));
        assert!(hit(|l| matches!(l, LinkId::TpToCo)));
        assert!(hit(|l| matches!(l, LinkId::CoToAgent(_))));
    });
}

// ---------------------------------------------------------------------
// Criterion 4: Paillier correctness
// ---------------------------------------------------------------------

#[test]
fn criterion_4_paillier_correctness() {
    criterion(4, "Paillier roundtrip and homomorphism", || {
        // Exhaustive over the full plaintext space of the p=5, q=7 key.
        let ks = PaillierKeySet::from_primes(
            5u32.into(),
            7u32.into(),
            BetaMode::AlphaPlusOne,
            KeyId(1),
            &mut rng(1),
        )
        .unwrap();
        let mut r = rng(2);
        let cts: Vec<_> = (0u32..35)
            .map(|pt| encrypt(ks.public(), &pt.into(), &mut r).unwrap())
            .collect();
        for (pt, ct) in cts.iter().enumerate() {
            assert_eq!(decrypt(&ks, ct).unwrap(), (pt as u32).into());
        }
        for a in 0usize..35 {
            for b in 0usize..35 {
                let sum =
                    add_ciphertexts(ks.public(), &[cts[a].clone(), cts[b].clone()]).unwrap();
                assert_eq!(
                    decrypt(&ks, &sum).unwrap(),
                    (((a + b) % 35) as u32).into(),
                    "pair ({a},{b})"
                );
            }
        }

        // 1000 randomized roundtrip and homomorphism trials per key
        // length.
        for (bits, seed) in [(512u64, 10u64), (1024, 11), (2048, 12)] {
            let ks = keygen(
                bits,
                &BigUint::one(),
                BetaMode::AlphaPlusOne,
                KeyId(2),
                &mut rng(seed),
            )
            .unwrap();
            let alpha = ks.alpha().clone();
            (0..1000u64).into_par_iter().for_each(|trial| {
                let mut r = rng(seed * 100_000 + trial);
                let pt = r.gen_biguint_below(&alpha);
                let ct = encrypt(ks.public(), &pt, &mut r).unwrap();
                assert_eq!(decrypt(&ks, &ct).unwrap(), pt, "{bits}-bit roundtrip");
            });
            (0..1000u64).into_par_iter().for_each(|trial| {
                let mut r = rng(seed * 200_000 + trial);
                let m = r.gen_range(2usize..=20);
                let ceiling = &alpha / m as u32;
                let pts: Vec<BigUint> =
                    (0..m).map(|_| r.gen_biguint_below(&ceiling)).collect();
                let cts: Vec<_> = pts
                    .iter()
                    .map(|pt| encrypt(ks.public(), pt, &mut r).unwrap())
                    .collect();
                let product = add_ciphertexts(ks.public(), &cts).unwrap();
                let want: BigUint = pts.iter().sum();
                assert_eq!(
                    decrypt(&ks, &product).unwrap(),
                    want,
                    "{bits}-bit homomorphism over {m} plaintexts"
                );
            });
        }
    });
}

// ---------------------------------------------------------------------
// Criterion 5: signature equation
// ---------------------------------------------------------------------

#[test]
fn criterion_5_signature_equation() {
    criterion(5, "signature equation and corruption rejection", || {
        for (bits, seed) in [(512u64, 21u64), (1024, 22)] {
            let ks = keygen(
                bits,
                &BigUint::one(),
                BetaMode::AlphaPlusOne,
                KeyId(3),
                &mut rng(seed),
            )
            .unwrap();
            let pk = ks.public().clone();
            let alpha_sq = pk.alpha_sq();

            // 200 authenticated sends; the raw equation is evaluated
            // with plain modular exponentiation, independent of the
            // verifier's shortcut for beta = alpha + 1.
            (0..200u64).into_par_iter().for_each(|i| {
                let mut r = rng(seed * 1000 + i);
                let m = r.gen_biguint_below(&pk.alpha);
                let index = r.gen_range(1..=101u64);
                let triple = auth_send(&ks, &m, index).unwrap();
                let rhs = mod_exp(&pk.beta, &triple.s1, &alpha_sq).unwrap()
                    * mod_exp(&triple.s2, &pk.alpha, &alpha_sq).unwrap()
                    % &alpha_sq;
                assert_eq!(rhs, triple.z, "{bits}-bit signature equation");
                match auth_receive(&pk, &triple, index) {
                    VerifyOutcome::Authentic(back) => assert_eq!(back, m),
                    VerifyOutcome::AttackDetected => panic!("genuine triple rejected"),
                }
            });

            // 500 randomized corruptions, each rejected.
            (0..500u64).into_par_iter().for_each(|i| {
                let mut r = rng(seed * 2000 + i);
                let m = r.gen_biguint_below(&pk.alpha);
                let index = r.gen_range(1..=101u64);
                let good = auth_send(&ks, &m, index).unwrap();
                let mut bad = good.clone();
                match i % 3 {
                    0 => bad.z += r.gen_biguint_range(&BigUint::one(), &alpha_sq),
                    1 => bad.s1 += r.gen_biguint_range(&BigUint::one(), &pk.alpha),
                    _ => bad.s2 += r.gen_biguint_range(&BigUint::one(), &pk.alpha),
                }
                assert_eq!(
                    auth_receive(&pk, &bad, index),
                    VerifyOutcome::AttackDetected,
                    "{bits}-bit corruption accepted"
                );
            });
        }
    });
}

// ---------------------------------------------------------------------
// Criterion 6: efficiency trend
// ---------------------------------------------------------------------

#[test]
fn criterion_6_efficiency_trend() {
    criterion(6, "pointwise/block efficiency ratio", || {
        let params = BenchParams {
            bits_list: vec![512, 2048],
            modes: vec![BenchMode::Pointwise, BenchMode::Block],
            n_agents: 100,
            n_points: 101,
            cycles: 1,
            seed: 42,
        };
        let records = run_bench(&params).expect("bench");
        let ratios = ratio_summary(&records);
        for row in &ratios {
            println!(
                "  bench: {} bits, {:>5}: pointwise {:.4}s, block {:.4}s, ratio {:.1}",
                row.key_bits,
                row.role.label(),
                row.pointwise_seconds,
                row.block_seconds,
                row.ratio
            );
        }
        let ratio_of = |bits: u64, role: BenchRole| {
            ratios
                .iter()
                .find(|r| r.key_bits == bits && r.role == role)
                .map(|r| r.ratio)
                .expect("ratio row")
        };
        // The reproducible claim: at 2048 bits the per-cycle cost of the
        // encryption-heavy roles drops by at least 50x in block mode
        // (the 101-point grid is the theoretical ceiling).
        assert!(
            ratio_of(2048, BenchRole::Agent) >= 50.0,
            "agent ratio at 2048 bits below 50"
        );
        assert!(
            ratio_of(2048, BenchRole::Co) >= 50.0,
            "coordinator ratio at 2048 bits below 50"
        );
    });
}

// ---------------------------------------------------------------------
// Criterion 7: packing oracle
// ---------------------------------------------------------------------

#[test]
fn criterion_7_packing_oracle() {
    criterion(7, "pack-sum homomorphism and worked example", || {
        // Worked example: 017009 + 015024 = 032033, cut into 33 and 32.
        let spec = PackSpec::new(3, 2);
        let a = pack(&[9u32.into(), 17u32.into()], &spec).unwrap();
        let b = pack(&[24u32.into(), 15u32.into()], &spec).unwrap();
        assert_eq!(a, 17_009u32.into());
        assert_eq!(b, 15_024u32.into());
        let total = a + b;
        assert_eq!(total, 32_033u32.into());
        assert_eq!(
            unpack(&total, &spec).unwrap(),
            vec![BigUint::from(33u32), BigUint::from(32u32)]
        );

        // Pack-sum homomorphism over random populations, with the
        // enlarged bound check.
        let mut r = rng(7);
        for _ in 0..500 {
            let count = r.gen_range(1..=10u32);
            let rows = r.gen_range(1..=50usize);
            let per_value = 999u64;
            let column_bound = rows as u64 * per_value + 1;
            let width = column_bound.to_string().len() as u32;
            let spec = PackSpec::new(width, count);
            let mut total = BigUint::from(0u32);
            let mut col_sums = vec![0u64; count as usize];
            for _ in 0..rows {
                let row: Vec<u64> = (0..count).map(|_| r.gen_range(0..=per_value)).collect();
                let vals: Vec<BigUint> = row.iter().map(|&v| BigUint::from(v)).collect();
                total += pack(&vals, &spec).unwrap();
                for (acc, v) in col_sums.iter_mut().zip(&row) {
                    *acc += v;
                }
            }
            let want: Vec<BigUint> = col_sums.iter().map(|&v| BigUint::from(v)).collect();
            assert_eq!(unpack(&total, &spec).unwrap(), want);
            assert!(total < packed_alpha_bound(count, &column_bound.into()));
        }
    });
}
