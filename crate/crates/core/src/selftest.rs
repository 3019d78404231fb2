//! Built-in property suites runnable from the command line: quick,
//! deterministic checks of the arithmetic core against independent
//! oracles.

use crate::market::{self, CurveKind, PriceGrid, SampledCurve};
use crate::numtheory;
use crate::packing::{self, PackSpec};
use crate::paillier::{self, BetaMode, KeyId};
use crate::signature;
use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Option<String>,
}

fn check(condition: bool, detail: String) -> Result<(), String> {
    if condition {
        Ok(())
    } else {
        Err(detail)
    }
}

fn naive_pow_mod(base: u64, exp: u64, modulus: u64) -> u64 {
    let mut acc = 1u64 % modulus;
    for _ in 0..exp {
        acc = acc * base % modulus;
    }
    acc
}

fn modexp_oracle() -> Result<(), String> {
    for modulus in 2u64..60 {
        for base in 0u64..30 {
            for exp in 0u64..30 {
                let want = naive_pow_mod(base, exp, modulus);
                let got = numtheory::mod_exp(&base.into(), &exp.into(), &modulus.into())
                    .map_err(|e| e.to_string())?;
                check(
                    got == want.into(),
                    format!("{base}^{exp} mod {modulus}: got {got}, want {want}"),
                )?;
            }
        }
    }
    Ok(())
}

fn paillier_exhaustive_35() -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(35);
    let ks = paillier::PaillierKeySet::from_primes(
        5u32.into(),
        7u32.into(),
        BetaMode::AlphaPlusOne,
        KeyId(1),
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let cts: Vec<_> = (0u32..35)
        .map(|pt| paillier::encrypt(ks.public(), &pt.into(), &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for (pt, ct) in cts.iter().enumerate() {
        let back = paillier::decrypt(&ks, ct).map_err(|e| e.to_string())?;
        check(back == (pt as u32).into(), format!("roundtrip of {pt}"))?;
    }
    for a in 0usize..35 {
        for b in 0usize..35 {
            let sum = paillier::add_ciphertexts(ks.public(), &[cts[a].clone(), cts[b].clone()])
                .map_err(|e| e.to_string())?;
            let got = paillier::decrypt(&ks, &sum).map_err(|e| e.to_string())?;
            check(
                got == (((a + b) % 35) as u32).into(),
                format!("homomorphism for {a}+{b}"),
            )?;
        }
    }
    Ok(())
}

fn pack_sum_homomorphism() -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for _ in 0..200 {
        let count = rng.gen_range(1..=8u32);
        let rows = rng.gen_range(1..=40usize);
        let spec = PackSpec::new(4, count);
        let mut total = BigUint::from(0u32);
        let mut col_sums = vec![0u64; count as usize];
        for _ in 0..rows {
            let row: Vec<u64> = (0..count).map(|_| rng.gen_range(0..=200u64)).collect();
            let vals: Vec<BigUint> = row.iter().map(|&v| v.into()).collect();
            total += packing::pack(&vals, &spec).map_err(|e| e.to_string())?;
            for (acc, v) in col_sums.iter_mut().zip(&row) {
                *acc += v;
            }
        }
        let cut = packing::unpack(&total, &spec).map_err(|e| e.to_string())?;
        let want: Vec<BigUint> = col_sums.iter().map(|&v| v.into()).collect();
        check(cut == want, format!("columns {col_sums:?}"))?;
    }
    Ok(())
}

fn packing_worked_example() -> Result<(), String> {
    let spec = PackSpec::new(3, 2);
    let a = packing::pack(&[9u32.into(), 17u32.into()], &spec).map_err(|e| e.to_string())?;
    let b = packing::pack(&[24u32.into(), 15u32.into()], &spec).map_err(|e| e.to_string())?;
    check(a == 17_009u32.into(), format!("packed a = {a}"))?;
    check(b == 15_024u32.into(), format!("packed b = {b}"))?;
    let sum = a + b;
    check(sum == 32_033u32.into(), format!("sum = {sum}"))?;
    let cut = packing::unpack(&sum, &spec).map_err(|e| e.to_string())?;
    check(
        cut == vec![BigUint::from(33u32), BigUint::from(32u32)],
        format!("cut = {cut:?}"),
    )
}

fn signature_roundtrip() -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let ks = paillier::keygen(256, &BigUint::one(), BetaMode::AlphaPlusOne, KeyId(4), &mut rng)
        .map_err(|e| e.to_string())?;
    for index in 1..=20u64 {
        let m = rng.gen_biguint_below(ks.alpha());
        let triple = signature::auth_send(&ks, &m, index).map_err(|e| e.to_string())?;
        match signature::auth_receive(ks.public(), &triple, index) {
            signature::VerifyOutcome::Authentic(back) => {
                check(back == m, format!("message {index} roundtrip"))?
            }
            signature::VerifyOutcome::AttackDetected => {
                return Err(format!("genuine triple {index} rejected"))
            }
        }
        let mut bad = triple.clone();
        bad.s1 += 1u32;
        check(
            signature::auth_receive(ks.public(), &bad, index)
                == signature::VerifyOutcome::AttackDetected,
            format!("corrupted triple {index} accepted"),
        )?;
    }
    Ok(())
}

fn market_clearing_rules() -> Result<(), String> {
    let grid = PriceGrid::with_points(0.0, 0.05, 4, 2, 2).map_err(|e| e.to_string())?;
    let supply =
        SampledCurve::new(CurveKind::Supply, 1, vec![0, 1, 2, 3]).map_err(|e| e.to_string())?;
    let demand =
        SampledCurve::new(CurveKind::Demand, 2, vec![4, 3, 2, 1]).map_err(|e| e.to_string())?;
    let out = market::clear_two_sided(&supply, &demand, &grid).map_err(|e| e.to_string())?;
    check(out.index == 3 && out.exact, format!("intersection {out:?}"))?;
    let demand2 =
        SampledCurve::new(CurveKind::Demand, 2, vec![3, 2, 1, 0]).map_err(|e| e.to_string())?;
    let out = market::clear_two_sided(&supply, &demand2, &grid).map_err(|e| e.to_string())?;
    check(out.index == 2 && !out.exact, format!("minimal gap {out:?}"))
}

type SuiteFn = fn() -> Result<(), String>;

/// Runs every suite, returning per-suite results in a stable order.
pub fn run_all() -> Vec<SuiteResult> {
    let suites: Vec<(&'static str, SuiteFn)> = vec![
        ("numtheory-modexp-oracle", modexp_oracle),
        ("paillier-exhaustive-35", paillier_exhaustive_35),
        ("pack-sum-homomorphism", pack_sum_homomorphism),
        ("packing-worked-example", packing_worked_example),
        ("signature-roundtrip", signature_roundtrip),
        ("market-clearing-rules", market_clearing_rules),
    ];
    suites
        .into_iter()
        .map(|(name, run)| match run() {
            Ok(()) => SuiteResult {
                name,
                passed: true,
                detail: None,
            },
            Err(detail) => SuiteResult {
                name,
                passed: false,
                detail: Some(detail),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let results = run_all();
        assert_eq!(results.len(), 6);
        for r in &results {
            assert!(r.passed, "{} failed: {:?}", r.name, r.detail);
        }
        let names: Vec<_> = results.iter().map(|r| r.name).collect();
        assert!(names.contains(&"paillier-exhaustive-35"));
        assert!(names.contains(&"pack-sum-homomorphism"));
    }
}
