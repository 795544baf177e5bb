//! Deterministic random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the tracker and trainer.
pub type TrackRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TrackRng {
    TrackRng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream keyed by `(seed, a, b)`, e.g. tracklet id and frame.
pub fn derived(seed: u64, a: u64, b: u64) -> TrackRng {
    seeded(splitmix(splitmix(seed ^ splitmix(a)) ^ b))
}
