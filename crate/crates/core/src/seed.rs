//! Stable hashing and seed derivation.
//!
//! Every random stream in the lab is keyed from the global seed through
//! [`derive_seed`]: the stage (or stream) name is hashed with FNV-1a and
//! mixed into the parent seed with one SplitMix64 step. Per-item and per-arm
//! streams chain further keys the same way, so results never depend on
//! iteration order or thread scheduling.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes. Stable across platforms and compiler versions.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// One SplitMix64 output step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for the stream named `key` under `parent`.
pub fn derive_seed(parent: u64, key: &str) -> u64 {
    splitmix64(parent ^ fnv1a(key.as_bytes()))
}

/// Child seed keyed by several string parts (separated so that
/// `("ab", "c")` and `("a", "bc")` differ).
pub fn derive_seed_parts(parent: u64, parts: &[&str]) -> u64 {
    parts.iter().fold(parent, |s, p| derive_seed(s, p))
}

pub(crate) fn rng_from(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
