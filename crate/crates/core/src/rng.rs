//! Seed handling. Every Monte Carlo routine splits its 64-bit seed into
//! per-chunk substreams with [`substream_seed`], so results do not depend on
//! how many worker threads run the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by all samplers.
pub type Rng = ChaCha8Rng;

/// Samples per independently seeded chunk.
pub const CHUNK: usize = 4096;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of substream `index` derived from `seed`: `splitmix64(seed ^ splitmix64(index))`.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

pub fn substream(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(substream_seed(seed, index))
}

/// Split `total` samples into `(chunk_index, count)` pairs of at most [`CHUNK`].
pub fn chunks(total: usize) -> Vec<(u64, usize)> {
    (0..total.div_ceil(CHUNK))
        .map(|i| (i as u64, CHUNK.min(total - i * CHUNK)))
        .collect()
}
