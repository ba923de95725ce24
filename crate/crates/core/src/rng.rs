//! Seeded, portable randomness for splits and training.
//!
//! Every stream is a ChaCha8 generator keyed by SHA-256 of
//! `(seed, domain, key)`. Shuffling is an in-house Fisher-Yates with
//! rejection-sampled bounded draws, so the permutation for a given seed does
//! not depend on any crate's shuffle implementation.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Identifier recorded in manifests next to every seed.
pub const ALGORITHM_ID: &str = "chacha8-sha256seed-fisher-yates-v1";

pub fn stream(seed: u64, domain: &str, key: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(key.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
pub fn below<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = (rng.next_u64() as u128) * (bound as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

pub fn shuffle<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
