//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream, selected by
//! `(seed, purpose, split)`. ChaCha is counter based, so a stream can also be
//! positioned at a record index: per-record draws never depend on how many
//! values other records consumed, or in what order records were processed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

/// Which dataset a draw belongs to. Train and test never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Test,
}

/// What the draws are used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Covariates,
    Treatment,
    Noise,
    SurrogateMask,
    Synonym,
    Folds,
    Init,
    Shuffle,
    Dropout,
    Coefficients,
    World,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Covariates => 1,
            Purpose::Treatment => 2,
            Purpose::Noise => 3,
            Purpose::SurrogateMask => 4,
            Purpose::Synonym => 5,
            Purpose::Folds => 6,
            Purpose::Init => 7,
            Purpose::Shuffle => 8,
            Purpose::Dropout => 9,
            Purpose::Coefficients => 10,
            Purpose::World => 11,
        }
    }
}

// Words reserved per record when a stream is positioned by index.
const WORDS_PER_RECORD: u128 = 1 << 20;

#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, purpose: Purpose, split: Split) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        let split_tag = match split {
            Split::Train => 0,
            Split::Test => 1u64 << 32,
        };
        inner.set_stream(split_tag | purpose.tag());
        StreamRng { inner }
    }

    /// Stream positioned at the block reserved for record `index`.
    pub fn for_record(seed: u64, purpose: Purpose, split: Split, index: u64) -> Self {
        let mut rng = Self::new(seed, purpose, split);
        rng.inner.set_word_pos(index as u128 * WORDS_PER_RECORD);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`; `n` must be non-zero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
