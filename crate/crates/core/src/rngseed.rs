//! Deterministic child-seed derivation so that independent pipeline
//! stages (per agent, per cycle, per purpose) can run in any order, or
//! in parallel, without perturbing each other's random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha generator keyed by a master seed and a tag path.
pub(crate) fn derive_rng(master: u64, tags: &[u64]) -> ChaCha20Rng {
    let mut state = master ^ 0x6C62_272E_07BB_0142;
    for &t in tags {
        let mixed = splitmix64(&mut state);
        state ^= t.rotate_left(17) ^ mixed;
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(seed)
}

/// Plain derived seed for nesting.
pub(crate) fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = master ^ 0x6C62_272E_07BB_0142;
    let mut out = 0;
    for &t in tags {
        let mixed = splitmix64(&mut state);
        state ^= t.rotate_left(17) ^ mixed;
        out = splitmix64(&mut state);
    }
    out
}
