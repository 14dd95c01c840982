//! Seeding conventions.
//!
//! Every stochastic operation takes an explicit `u64` seed and draws from
//! `ChaCha8Rng::seed_from_u64(seed)`. Child seeds (per replication, per grid
//! cell, per unit) are derived from a root seed with [`derive_seed`], a
//! SplitMix64 finalizer applied over the stream path, so streams are distinct,
//! stable across platforms and independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the stream `path` under `root`.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D))))
}
