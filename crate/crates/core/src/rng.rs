//! Deterministic sub-stream derivation for replica-parallel Monte Carlo.
//!
//! Every replica owns an independent generator derived from
//! `(master seed, module tag, replica index)` alone, so results do not
//! depend on scheduling or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splitmix64 step, used to whiten tag/index mixtures into seed material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive the generator for one `(seed, tag, replica)` sub-stream.
pub fn substream(master_seed: u64, tag: &str, replica: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a(tag).rotate_left(17) ^ replica.wrapping_mul(0xd1342543de82ef95);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
