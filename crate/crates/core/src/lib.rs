//! Privacy-preserving transactive energy market toolkit.
//!
//! A coordinator clears a double auction over sampled supply and demand
//! curves without ever seeing an individual curve: agents encrypt their
//! sampled values under the coordinator's Paillier public key, an
//! independent third party multiplies the ciphertexts (which sums the
//! plaintexts), and the coordinator decrypts only the aggregates. Every
//! message on an insecure link can additionally be wrapped in a Paillier
//! digital signature with an index stamp so that tampering, forgery,
//! replay and reordering are detected by the receiver.
//!
//! The crate is organised around that pipeline:
//!
//! - [`numtheory`]: big-integer primitives (primes, modular arithmetic)
//! - [`paillier`]: keys, encryption, decryption, ciphertext aggregation
//! - [`packing`]: decimal slot packing so one ciphertext carries a curve
//! - [`signature`]: Paillier signatures and the index-stamped channel
//! - [`market`]: curves, quantization and plaintext clearing (the oracle
//!   the encrypted pipeline is checked against)
//! - [`protocol`]: the three-party auction round, pointwise and block
//! - [`simulator`]: in-memory channels with a scriptable adversary
//! - [`bench`]: per-role timing of the cryptographic pipeline

pub mod bench;
pub mod market;
pub mod numtheory;
pub mod packing;
pub mod paillier;
pub mod protocol;
pub mod selftest;
pub mod signature;
pub mod simulator;

pub(crate) mod rngseed;
pub(crate) mod serde_util;
