//! Deterministic replica seeding.
//!
//! All randomness in the toolkit flows from one master seed. Replica r uses
//! a ChaCha8 generator seeded with splitmix64(master XOR (r+1)·phi64), where
//! phi64 is the 64-bit golden-ratio constant. The contract is "same master
//! seed, same ensemble" — bitwise, independent of thread scheduling, because
//! every replica owns its generator.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from the splitmix64 generator; a bijective mixing of the word.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed word for a given replica of a given master seed.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    splitmix64(master ^ replica.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))
}

/// Generator for one replica.
pub fn replica_rng(master: u64, replica: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replica_seed(master, replica))
}
