//! Seed fan-out. Every random stream in the crate is a `ChaCha8Rng` whose
//! seed is derived from the single user-facing seed plus a component tag, so
//! results do not depend on platform hashing or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte string. Stable across builds, unlike `DefaultHasher`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a tag into an independent child seed.
pub fn derive(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ splitmix64(stable_hash(tag.as_bytes())))
}

/// Mixes a base seed with a numeric stream id (epoch, pair hash, ...).
pub fn derive_n(seed: u64, n: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(n)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    rng(derive(seed, tag))
}
