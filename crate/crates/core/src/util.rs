//! Crate-internal helpers.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Derive an independent deterministic RNG stream from a master seed and a
/// purpose tag (FNV-1a over the tag, folded into the seed).
pub(crate) fn seed_rng(seed: u64, tag: &str) -> ChaCha20Rng {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha20Rng::seed_from_u64(seed ^ h)
}
