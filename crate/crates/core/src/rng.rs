//! Deterministic random-substream derivation.
//!
//! Every scan point owns an independent ChaCha8 stream keyed by (seed, point
//! index); the s-th shot of a point consumes the s-th draw of that stream.
//! Replicate studies derive whole-plan seeds the same way. Because no stream
//! depends on execution order, results are byte-identical for any parallel
//! schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step: the standard 64-bit mixer used to expand seeds.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one scan point of one plan.
pub fn point_stream(seed: u64, point_index: u64) -> ChaCha8Rng {
    let mut state = seed ^ point_index.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derived plan seed for replicate `index` of a study run under `base_seed`.
pub fn replicate_seed(base_seed: u64, index: u64) -> u64 {
    let mut state = base_seed ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    splitmix64(&mut state)
}
