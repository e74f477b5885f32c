//! Seed derivation for reproducible, independently seedable random streams.
//!
//! Every stream is a ChaCha20 generator (`rand_chacha::ChaCha20Rng`), a counter-based
//! cipher RNG. A [`SeedStream`] holds a 64-bit seed; child streams for replications
//! or dimensions are derived by mixing the parent seed with the child index through
//! SplitMix64, and each stream exposes disjoint ChaCha stream ids per [`Purpose`].

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// What a generator drawn from a [`SeedStream`] is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Rotation = 1,
    Sample = 2,
    MonteCarlo = 3,
    Folds = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(self) -> u64 {
        self.seed
    }

    /// Child stream `index`; distinct indices give unrelated seeds.
    pub fn substream(self, index: u64) -> Self {
        let mixed = splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
        Self { seed: mixed }
    }

    pub fn rng(self, purpose: Purpose) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(purpose as u64);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
