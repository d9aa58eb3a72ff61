//! Seed contract: every random draw in the crate comes from a ChaCha stream
//! keyed by `(experiment_seed, trial_index, label)`, so a trial reproduces
//! regardless of which worker runs it or in what order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Identifies one independent random stream within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel(pub u64);

impl StreamLabel {
    pub const SOI: Self = Self(1);
    pub const SOI_CHANNEL: Self = Self(2);
    pub const INTERFERER: Self = Self(3);
    pub const INTERFERER_CHANNEL: Self = Self(4);
    pub const NOISE: Self = Self(5);

    /// Same stream family, distinguished by a sub-index (redraws, hypotheses).
    pub fn with_sub(self, sub: u64) -> Self {
        Self(splitmix64(
            self.0 ^ splitmix64(sub.wrapping_add(0x5851_f42d_4c95_7f2d)),
        ))
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes several words into one 64-bit seed.
pub fn derive_seed(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c908, |acc, &w| {
        splitmix64(acc ^ splitmix64(w))
    })
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    let mut bytes = [0u8; 32];
    let mut state = seed;
    for chunk in bytes.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

pub fn stream_rng(experiment_seed: u64, trial_index: u64, label: StreamLabel) -> SimRng {
    rng_from_seed(derive_seed(&[experiment_seed, trial_index, label.0]))
}

/// Unit-variance circularly symmetric complex Gaussian sample.
pub fn normal_c64<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
