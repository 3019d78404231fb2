//! Paillier digital signatures and the index-stamped authenticated
//! channel built on them.
//!
//! A message `m` in `Z_{alpha^2}` coprime to `alpha` decomposes uniquely
//! as `beta^s1 * s2^alpha mod alpha^2`; the signer's private scalars
//! recover `(s1, s2)` and any holder of the public key checks the
//! equation. For transport, the sender prefixes the message with a
//! per-link index `l` (signing `z = l <-> m`) and the receiver accepts
//! only if the signature verifies *and* the leading digits of `z` equal
//! the index it expects next, which is what defeats replays and reorders.

use crate::numtheory::{self, gcd, powm, BigNat};
use crate::packing::{num_digits, pow10};
use crate::paillier::{KeyId, PaillierKeySet, PublicKey};
use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("message shares a factor with the modulus and cannot be signed")]
    UnsignableMessage,
    #[error("message is not below the squared modulus of the signing key")]
    MessageOutOfRange,
    #[error("channel indices start at 1")]
    InvalidIndex,
}

/// What travels over a link: the index-prefixed message and both
/// signature halves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTriple {
    pub signer_id: KeyId,
    #[serde(with = "crate::serde_util::biguint_dec")]
    pub z: BigNat,
    #[serde(with = "crate::serde_util::biguint_dec")]
    pub s1: BigNat,
    #[serde(with = "crate::serde_util::biguint_dec")]
    pub s2: BigNat,
}

/// Receiver-side outcome: either the recovered message, or a detected
/// attack (in which case no message is released).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    Authentic(BigNat),
    AttackDetected,
}

impl VerifyOutcome {
    pub fn flag(&self) -> u8 {
        match self {
            VerifyOutcome::Authentic(_) => 1,
            VerifyOutcome::AttackDetected => 0,
        }
    }

    pub fn message(&self) -> Option<&BigNat> {
        match self {
            VerifyOutcome::Authentic(m) => Some(m),
            VerifyOutcome::AttackDetected => None,
        }
    }
}

/// Signs `m < alpha^2` with `gcd(m, alpha) = 1`:
///
/// ```text
/// s1 = L(m^nu mod alpha^2) * pi mod alpha
/// s2 = (m * beta^-s1 mod alpha)^(alpha^-1 mod nu) mod alpha
/// ```
///
/// Signing is deterministic; the same message always yields the same
/// pair.
pub fn sign(ks: &PaillierKeySet, m: &BigNat) -> Result<(BigNat, BigNat), SignatureError> {
    let pk = ks.public();
    let alpha = &pk.alpha;
    let alpha_sq = pk.alpha_sq();
    if *m >= alpha_sq {
        return Err(SignatureError::MessageOutOfRange);
    }
    if !gcd(m, alpha).is_one() {
        return Err(SignatureError::UnsignableMessage);
    }
    let u = powm(m, ks.nu(), &alpha_sq);
    let s1 = (u - BigUint::one()) / alpha * ks.pi() % alpha;
    let base = if pk.beta == alpha + 1u32 {
        // beta = 1 (mod alpha), so the beta^-s1 factor vanishes.
        m % alpha
    } else {
        let beta_inv = numtheory::mod_inv(&pk.beta, alpha)
            .expect("beta is a unit of Z_{alpha^2}, hence coprime to alpha");
        m * powm(&beta_inv, &s1, alpha) % alpha
    };
    let s2 = powm(&base, ks.alpha_inv_nu(), alpha);
    Ok((s1, s2))
}

/// Checks `m = beta^s1 * s2^alpha mod alpha^2`. Failure is the flag, not
/// an error; any integers are accepted and out-of-range ones simply fail.
pub fn verify(pk: &PublicKey, m: &BigNat, s1: &BigNat, s2: &BigNat) -> bool {
    let alpha_sq = pk.alpha_sq();
    let rhs = pk.beta_pow(s1, &alpha_sq) * powm(s2, &pk.alpha, &alpha_sq) % &alpha_sq;
    *m == rhs
}

/// Prefixes `m` with the link index and signs the combined integer
/// `z = index * 10^num_digits(m) + m`.
pub fn auth_send(
    ks: &PaillierKeySet,
    m: &BigNat,
    index: u64,
) -> Result<SignedTriple, SignatureError> {
    if index == 0 {
        return Err(SignatureError::InvalidIndex);
    }
    let z = BigUint::from(index) * pow10(num_digits(m)) + m;
    let (s1, s2) = sign(ks, &z)?;
    Ok(SignedTriple {
        signer_id: ks.key_id(),
        z,
        s1,
        s2,
    })
}

/// Receiver side of the authenticated channel: verifies the signature
/// over `z` and checks that the leading digits of `z` equal the index the
/// receiver expects next. On success the message is the remaining digits.
pub fn auth_receive(pk: &PublicKey, triple: &SignedTriple, expected_index: u64) -> VerifyOutcome {
    debug_assert!(expected_index >= 1);
    if !verify(pk, &triple.z, &triple.s1, &triple.s2) {
        return VerifyOutcome::AttackDetected;
    }
    let nz = num_digits(&triple.z);
    let nl = num_digits(&BigUint::from(expected_index));
    if nz <= nl {
        return VerifyOutcome::AttackDetected;
    }
    let tail = pow10(nz - nl);
    if &triple.z / &tail != BigUint::from(expected_index) {
        return VerifyOutcome::AttackDetected;
    }
    VerifyOutcome::Authentic(&triple.z % &tail)
}
