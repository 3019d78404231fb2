//! Paillier additive homomorphic encryption.
//!
//! A key set is `(alpha, beta)` public and `(nu, pi)` private, built from
//! two primes `p, q` with `gcd(pq, (p-1)(q-1)) = 1`:
//!
//! - `alpha = p*q`, `nu = lcm(p-1, q-1)`,
//! - `beta` is a unit of `Z_{alpha^2}` for which
//!   `pi = L(beta^nu mod alpha^2)^-1 mod alpha` exists, where
//!   `L(x) = (x-1)/alpha`.
//!
//! Encryption of `pt < alpha` is `beta^pt * r^alpha mod alpha^2` with a
//! fresh `r` in `Z_alpha^*`; decryption is `L(ct^nu mod alpha^2) * pi mod
//! alpha`. Multiplying ciphertexts adds the underlying plaintexts as long
//! as the plaintext sum stays below `alpha`.

use crate::numtheory::{self, gcd, powm, BigNat};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PaillierError {
    #[error("no modulus of {bits} bits can exceed the plaintext bound")]
    BoundUnsatisfiable { bits: u64 },
    #[error("gcd(pq, (p-1)(q-1)) != 1 for the supplied primes")]
    GcdConditionViolated,
    #[error("plaintext is not below the modulus")]
    PlaintextOutOfRange,
    #[error("ciphertext is not below the squared modulus")]
    CiphertextOutOfRange,
    #[error("ciphertext key id does not match the key in use")]
    KeyMismatch,
    #[error("cannot aggregate an empty ciphertext list")]
    EmptyAggregation,
    #[error("beta is not a usable generator for this modulus")]
    InvalidBeta,
}

/// Identifier tying ciphertexts and signatures to the key that made them.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct KeyId(pub u64);

impl std::fmt::Display for KeyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "key#{}", self.0)
    }
}

/// How `beta` is chosen at key generation.
///
/// `AlphaPlusOne` always admits `pi` (since `L((1+alpha)^nu) = nu mod
/// alpha`, invertible by the gcd condition) and makes `beta^pt` a single
/// multiplication. `Random` draws `beta` uniformly from `Z_{alpha^2}^*`
/// and retries until `pi` exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    #[default]
    AlphaPlusOne,
    Random,
}

/// Public half of a key set: enough to encrypt, aggregate and verify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub key_id: KeyId,
    pub bits: u64,
    #[serde(with = "crate::serde_util::biguint_dec")]
    pub alpha: BigNat,
    #[serde(with = "crate::serde_util::biguint_dec")]
    pub beta: BigNat,
}

impl PublicKey {
    pub fn alpha_sq(&self) -> BigNat {
        &self.alpha * &self.alpha
    }

    /// `beta^e mod alpha^2`, using the one-multiplication shortcut when
    /// `beta = alpha + 1`: `(1 + alpha)^e = 1 + e*alpha (mod alpha^2)`.
    pub(crate) fn beta_pow(&self, e: &BigNat, alpha_sq: &BigNat) -> BigNat {
        if self.beta == &self.alpha + 1u32 {
            (BigUint::one() + e * &self.alpha) % alpha_sq
        } else {
            powm(&self.beta, e, alpha_sq)
        }
    }
}

/// Full key set held by the party that generated it. The private scalars
/// never leave this struct through serialization; persisting a key means
/// persisting its primes explicitly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaillierKeySet {
    public: PublicKey,
    p: BigNat,
    q: BigNat,
    nu: BigNat,
    pi: BigNat,
    /// `alpha^-1 mod nu`, precomputed for signing.
    alpha_inv_nu: BigNat,
}

impl PaillierKeySet {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> KeyId {
        self.public.key_id
    }

    pub fn alpha(&self) -> &BigNat {
        &self.public.alpha
    }

    pub(crate) fn nu(&self) -> &BigNat {
        &self.nu
    }

    pub(crate) fn pi(&self) -> &BigNat {
        &self.pi
    }

    pub(crate) fn alpha_inv_nu(&self) -> &BigNat {
        &self.alpha_inv_nu
    }

    /// The generating primes, exposed for explicit key persistence.
    pub fn primes(&self) -> (&BigNat, &BigNat) {
        (&self.p, &self.q)
    }

    /// Builds a key set from known primes. Fails with
    /// [`PaillierError::GcdConditionViolated`] when
    /// `gcd(pq, (p-1)(q-1)) != 1`; primality of `p` and `q` is trusted.
    pub fn from_primes(
        p: BigNat,
        q: BigNat,
        beta_mode: BetaMode,
        key_id: KeyId,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<Self, PaillierError> {
        let alpha = &p * &q;
        let alpha_sq = &alpha * &alpha;
        loop {
            let beta = match beta_mode {
                BetaMode::AlphaPlusOne => &alpha + 1u32,
                BetaMode::Random => numtheory::sample_coprime(&alpha_sq, rng),
            };
            match Self::from_primes_with_beta(p.clone(), q.clone(), beta, key_id) {
                // A random beta may land outside the usable set; redraw.
                Err(PaillierError::InvalidBeta) if beta_mode == BetaMode::Random => continue,
                other => return other,
            }
        }
    }

    /// Rebuilds a key set from its primes and an explicit `beta`, the
    /// shape a persisted private key record comes back in.
    pub fn from_primes_with_beta(
        p: BigNat,
        q: BigNat,
        beta: BigNat,
        key_id: KeyId,
    ) -> Result<Self, PaillierError> {
        let alpha = &p * &q;
        let p1 = &p - 1u32;
        let q1 = &q - 1u32;
        if !gcd(&alpha, &(&p1 * &q1)).is_one() {
            return Err(PaillierError::GcdConditionViolated);
        }
        let nu = numtheory::lcm(&p1, &q1);
        let alpha_sq = &alpha * &alpha;
        if beta.is_zero() || beta >= alpha_sq || !gcd(&beta, &alpha).is_one() {
            return Err(PaillierError::InvalidBeta);
        }
        let l = residue_log(&powm(&beta, &nu, &alpha_sq), &alpha);
        let pi = numtheory::mod_inv(&l, &alpha).map_err(|_| PaillierError::InvalidBeta)?;
        let alpha_inv_nu = numtheory::mod_inv(&alpha, &nu)
            .expect("gcd(alpha, nu) = 1 follows from the gcd condition");
        let bits = alpha.bits();
        Ok(Self {
            public: PublicKey {
                key_id,
                bits,
                alpha,
                beta,
            },
            p,
            q,
            nu,
            pi,
            alpha_inv_nu,
        })
    }
}

/// `L(x) = (x - 1) / alpha`, the discrete-log extraction map on the
/// subgroup of `Z_{alpha^2}` congruent to 1 modulo `alpha`.
fn residue_log(x: &BigNat, alpha: &BigNat) -> BigNat {
    (x - BigUint::one()) / alpha
}

/// A Paillier ciphertext: an element of `Z_{alpha^2}` tagged with the key
/// that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    #[serde(with = "crate::serde_util::biguint_dec")]
    pub value: BigNat,
    pub key_id: KeyId,
}

/// Generates a key set with exactly `bits` binary digits in `alpha` and
/// `alpha > plaintext_bound`. Primes are drawn at `bits/2` digits each
/// (top bits set) and regenerated until the modulus length, the gcd
/// condition and the bound all hold.
pub fn keygen(
    bits: u64,
    plaintext_bound: &BigNat,
    beta_mode: BetaMode,
    key_id: KeyId,
    rng: &mut (impl Rng + ?Sized),
) -> Result<PaillierKeySet, PaillierError> {
    assert!(bits >= 6, "keygen requires bits >= 6");
    if *plaintext_bound >= BigUint::one() << bits {
        return Err(PaillierError::BoundUnsatisfiable { bits });
    }
    loop {
        let p = numtheory::gen_prime(bits - bits / 2, rng);
        let q = numtheory::gen_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let alpha = &p * &q;
        if alpha.bits() != bits || alpha <= *plaintext_bound {
            continue;
        }
        match PaillierKeySet::from_primes(p, q, beta_mode, key_id, rng) {
            Ok(ks) => return Ok(ks),
            Err(PaillierError::GcdConditionViolated) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Encrypts `pt < alpha` with a fresh random nonce.
pub fn encrypt(
    pk: &PublicKey,
    pt: &BigNat,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Ciphertext, PaillierError> {
    let r = numtheory::sample_coprime(&pk.alpha, rng);
    encrypt_with_nonce(pk, pt, &r)
}

/// Deterministic encryption core: `beta^pt * r^alpha mod alpha^2`.
/// The caller supplies the nonce `r`, which must lie in `Z_alpha^*`.
pub fn encrypt_with_nonce(
    pk: &PublicKey,
    pt: &BigNat,
    r: &BigNat,
) -> Result<Ciphertext, PaillierError> {
    if *pt >= pk.alpha {
        return Err(PaillierError::PlaintextOutOfRange);
    }
    debug_assert!(!r.is_zero() && *r < pk.alpha && gcd(r, &pk.alpha).is_one());
    let alpha_sq = pk.alpha_sq();
    let value = pk.beta_pow(pt, &alpha_sq) * powm(r, &pk.alpha, &alpha_sq) % &alpha_sq;
    Ok(Ciphertext {
        value,
        key_id: pk.key_id,
    })
}

/// Decrypts a ciphertext made under this key set.
pub fn decrypt(ks: &PaillierKeySet, ct: &Ciphertext) -> Result<BigNat, PaillierError> {
    if ct.key_id != ks.public.key_id {
        return Err(PaillierError::KeyMismatch);
    }
    let alpha = &ks.public.alpha;
    let alpha_sq = ks.public.alpha_sq();
    if ct.value >= alpha_sq {
        return Err(PaillierError::CiphertextOutOfRange);
    }
    let u = powm(&ct.value, &ks.nu, &alpha_sq);
    Ok(residue_log(&u, alpha) * &ks.pi % alpha)
}

/// Multiplies ciphertexts modulo `alpha^2`; decrypting the product yields
/// the plaintext sum whenever that sum is below `alpha`.
pub fn add_ciphertexts(pk: &PublicKey, cts: &[Ciphertext]) -> Result<Ciphertext, PaillierError> {
    let (first, rest) = cts.split_first().ok_or(PaillierError::EmptyAggregation)?;
    if cts.iter().any(|ct| ct.key_id != pk.key_id) {
        return Err(PaillierError::KeyMismatch);
    }
    let alpha_sq = pk.alpha_sq();
    let mut acc = first.value.clone();
    for ct in rest {
        acc = acc * &ct.value % &alpha_sq;
    }
    Ok(Ciphertext {
        value: acc,
        key_id: pk.key_id,
    })
}
