//! Counter-based random streams.
//!
//! Every draw is a pure function of `(key, stream, counter)`: the ChaCha block
//! function is positioned at the counter inside the requested stream, so the
//! value never depends on how many other draws happened before it or on which
//! thread asked for it.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Words reserved per counter value; a draw never consumes more than a few.
const WORDS_PER_COUNTER: u32 = 16;

#[derive(Clone, Debug)]
pub struct CounterRng {
    seed: u64,
    base: ChaCha8Rng,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent generator for a named sub-purpose of the same master seed.
    pub fn derive(seed: u64, domain: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(domain)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn positioned(&self, stream: u64, counter: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(stream);
        rng.set_word_pos((counter as u128) << WORDS_PER_COUNTER);
        rng
    }

    /// Standard normal variate at `(stream, counter)`.
    pub fn normal(&self, stream: u64, counter: u64) -> f64 {
        self.positioned(stream, counter).sample(StandardNormal)
    }

    /// Uniform variate in `[0, 1)` at `(stream, counter)`.
    pub fn uniform(&self, stream: u64, counter: u64) -> f64 {
        // 53 random mantissa bits.
        (self.positioned(stream, counter).next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// SplitMix64 finalizer, used only to derive seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
