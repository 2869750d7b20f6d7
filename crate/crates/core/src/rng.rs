//! Seeded randomness.
//!
//! All sampling uses ChaCha8 seeded through [`SeedableRng::seed_from_u64`].
//! Index draws are `next_u64() % bound` and shuffles are the descending
//! Fisher-Yates variant (`for i in (1..n).rev() { swap(i, draw(i + 1)) }`),
//! so any implementation of ChaCha8 reproduces the same folds and episodes.

use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed and a label.
pub fn derive(seed: u64, stream: u64) -> Rng {
    let mut rng = from_seed(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..bound`. `bound` must be positive.
#[inline]
pub fn index(rng: &mut Rng, bound: usize) -> usize {
    debug_assert!(bound > 0);
    (rng.next_u64() % bound as u64) as usize
}

/// Uniform integer in `lo..=hi`.
#[inline]
pub fn inclusive(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + index(rng, hi - lo + 1)
}

/// Uniform real in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform real in `[lo, hi)`.
#[inline]
pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}

pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// `k` distinct indices from `0..n` in draw order (partial Fisher-Yates).
pub fn sample_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Serializable position of a [`Rng`] stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
