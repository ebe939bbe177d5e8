//! Counter-based random substreams.
//!
//! Campaigns key every trial's generator by (master seed, index path), so the
//! same configuration reproduces bit-identical counts no matter how the work
//! is split across threads or runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 increment and finalizer constants.
const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A generator for the substream identified by `path` under `master_seed`.
///
/// Paths of different lengths or contents give statistically independent
/// streams; the same (seed, path) always gives the same stream.
pub fn substream(master_seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = master_seed;
    // Absorb the path, separating elements from raw state advances so that
    // e.g. [1] and [0, 0] cannot collide trivially.
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(GAMMA).rotate_left(17);
        acc ^= splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        acc = splitmix64(&mut state) ^ acc.rotate_left(29);
        chunk.copy_from_slice(&acc.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// A child master seed for an indexed unit of work (grid cell, study arm).
/// Substreams under different derived seeds stay independent.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut state = master_seed ^ index.wrapping_mul(GAMMA).rotate_left(23);
    splitmix64(&mut state)
}
