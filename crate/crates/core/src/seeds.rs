//! Named sub-seeds fanned out from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for stream `name` under `root`.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the root.
    let h = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    splitmix64(root ^ splitmix64(h))
}

/// Seed for stream `name` with an integer key, e.g. `("augment", epoch)`.
pub fn keyed_seed(root: u64, name: &str, key: u64) -> u64 {
    splitmix64(sub_seed(root, name) ^ splitmix64(key.wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
