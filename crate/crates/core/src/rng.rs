//! Named, independent random streams derived from one master seed.
//!
//! Each consumer (a household's load noise, a rollout's action sampling, ...)
//! gets its own ChaCha stream, so adding a consumer never shifts the draws
//! of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Top-level stream families. The discriminant occupies the high bits of
/// the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Load = 1,
    Pv = 2,
    Temperature = 3,
    InitialSoc = 4,
    Rollout = 5,
    Init = 6,
    Episode = 7,
}

pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | (index & ((1 << 56) - 1)));
    rng
}

/// Index for per-household streams.
pub fn household_key(microgrid: usize, household: usize) -> u64 {
    ((microgrid as u64) << 24) | household as u64
}

/// Deterministically mix two integers into a fresh seed (splitmix64 finalizer).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
