//! Seeded randomness. Every stochastic routine takes an explicit generator
//! so results are reproducible from a single 64-bit seed.

use rand::SeedableRng;

/// The generator used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of words into one seed. Different word lists give
/// statistically unrelated seeds.
pub fn mix_seed(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c908, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}
