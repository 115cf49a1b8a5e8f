//! Keyed, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose key is
//! derived from a user seed and a small tuple of indices (setting, replica,
//! event class). Work items can therefore run in any order, or concurrently,
//! and still produce identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substreams of [`keyed_rng`] used across the crate.
pub mod streams {
    pub const PAIRS: u64 = 0;
    pub const SIGNAL_DARK: u64 = 1;
    pub const IDLER_DARK: u64 = 2;
    pub const BOOTSTRAP: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator keyed by `(seed, index)` on substream `stream`.
pub fn keyed_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        mix(seed),
        mix(seed ^ mix(index)),
        mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)),
        mix(seed.rotate_left(17) ^ index),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}
