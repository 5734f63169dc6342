//! Reproducible random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stochastic step in the crate.
pub type BenchRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stable hash of `(master, kind, index)`; independent of platform and
/// compiler version.
pub fn derive_seed(master: u64, kind: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(kind.as_bytes())) ^ splitmix64(index))
}

pub fn stream(master: u64, kind: &str, index: u64) -> BenchRng {
    BenchRng::seed_from_u64(derive_seed(master, kind, index))
}
