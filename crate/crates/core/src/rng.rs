//! Seeded random streams. Every chain owns one stream whose seed is a pure
//! function of the campaign coordinates, so subsets can be re-run in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed; order matters.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(master), |acc, &c| mix64(acc ^ mix64(c)))
}

/// Seed of the chain at `(beta_index, chain_index, length_index)`.
pub fn chain_seed(master: u64, beta_index: usize, chain_index: usize, length_index: usize) -> u64 {
    derive_seed(
        master,
        &[beta_index as u64, chain_index as u64, length_index as u64],
    )
}

pub fn chain_stream(
    master: u64,
    beta_index: usize,
    chain_index: usize,
    length_index: usize,
) -> RandomStream {
    RandomStream::seed_from_u64(chain_seed(master, beta_index, chain_index, length_index))
}

/// Independent stream for auxiliary work (oracle chunks, validators).
pub fn substream(master: u64, label: u64, index: u64) -> RandomStream {
    RandomStream::seed_from_u64(derive_seed(master, &[u64::MAX, label, index]))
}
