//! Reproducible random streams.
//!
//! Every chunk of gates draws from its own ChaCha8 stream selected by
//! `(seed, chunk index)`. ChaCha is a counter-based generator, so a stream is
//! fully determined by its key and position and never depends on which worker
//! thread consumes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for stream `stream` under master key `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an independent master key from `(seed, index)` with the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
