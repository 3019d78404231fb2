//! Arbitrary-precision integer utilities shared by every cryptographic
//! operation: prime generation, modular exponentiation and inversion,
//! gcd/lcm, and coprime sampling.

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

/// Non-negative arbitrary-precision integer used throughout the crate.
pub type BigNat = BigUint;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NumTheoryError {
    #[error("modulus must be at least 2, got {0}")]
    ModulusTooSmall(BigUint),
    #[error("{0} has no inverse modulo {1}")]
    NoInverse(BigUint, BigUint),
}

/// Rounds of the probabilistic primality test. Error probability per
/// composite accepted is below 4^-64.
pub const MILLER_RABIN_ROUNDS: u32 = 64;

/// Internal modular exponentiation; callers guarantee `modulus >= 2`.
///
/// With the `gmp` feature the heavy lifting is delegated to the system
/// GMP library, which is roughly twice as fast as the pure-Rust path at
/// the key sizes used here. Both paths compute the same function.
#[cfg(feature = "gmp")]
pub(crate) fn powm(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    use rug::integer::Order;
    debug_assert!(*modulus >= BigUint::from(2u32));
    let b = rug::Integer::from_digits(&base.to_bytes_le(), Order::Lsf);
    let e = rug::Integer::from_digits(&exp.to_bytes_le(), Order::Lsf);
    let m = rug::Integer::from_digits(&modulus.to_bytes_le(), Order::Lsf);
    let r = b.pow_mod(&e, &m).expect("non-negative exponent");
    BigUint::from_bytes_le(&r.to_digits::<u8>(Order::Lsf))
}

#[cfg(not(feature = "gmp"))]
pub(crate) fn powm(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> BigUint {
    debug_assert!(*modulus >= BigUint::from(2u32));
    base.modpow(exp, modulus)
}

/// `base^exp mod modulus`.
pub fn mod_exp(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint, NumTheoryError> {
    if *modulus < BigUint::from(2u32) {
        return Err(NumTheoryError::ModulusTooSmall(modulus.clone()));
    }
    Ok(powm(base, exp, modulus))
}

/// Multiplicative inverse of `a` modulo `n`: the `x` with `a*x = 1 (mod n)`.
pub fn mod_inv(a: &BigUint, n: &BigUint) -> Result<BigUint, NumTheoryError> {
    if *n < BigUint::from(2u32) {
        return Err(NumTheoryError::ModulusTooSmall(n.clone()));
    }
    a.modinv(n)
        .ok_or_else(|| NumTheoryError::NoInverse(a.clone(), n.clone()))
}

pub fn gcd(a: &BigUint, b: &BigUint) -> BigUint {
    a.gcd(b)
}

/// Least common multiple; requires `a, b >= 1`.
pub fn lcm(a: &BigUint, b: &BigUint) -> BigUint {
    debug_assert!(!a.is_zero() && !b.is_zero());
    a.lcm(b)
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Probabilistic primality test with `rounds` random witnesses.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &sp in SMALL_PRIMES.iter() {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    // n is odd and > 251 here; write n-1 = d * 2^s with d odd.
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().expect("n-1 > 0");
    let d = &n_minus_one >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_one);
        let mut x = powm(&a, &d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 0..s - 1 {
            x = powm(&x, &two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Generates a prime with exactly `bits` binary digits (top bit set).
/// Deterministic for a fixed RNG state.
pub fn gen_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 3, "gen_prime requires bits >= 3");
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

/// Uniform element of `Z_n^*` (in `[1, n-1]`, coprime to `n`) by
/// rejection sampling; for semiprime `n` the expected number of draws is
/// below 2.
pub fn sample_coprime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> BigUint {
    assert!(*n >= BigUint::from(2u32), "sample_coprime requires n >= 2");
    let one = BigUint::one();
    loop {
        let r = rng.gen_biguint_range(&one, n);
        if gcd(&r, n).is_one() {
            return r;
        }
    }
}
