//! Named, splittable random streams.
//!
//! Every random draw in the crate comes from a stream keyed by a root seed and
//! a path of integer ids, e.g. `(noise_seed, volume, slice, nex)`. Streams do
//! not depend on generation order, so serial and parallel generation agree.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of ids.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &id| splitmix64(acc ^ splitmix64(id.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Stable ids for named substreams.
pub mod ids {
    pub const PHANTOM: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const CALIBRATION: u64 = 5;
}
