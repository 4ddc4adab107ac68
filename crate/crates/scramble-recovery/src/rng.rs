//! Reproducible random streams.
//!
//! A [`RngStream`] is a `(seed, index)` pair. Stream `i` of a parent is derived by a
//! 64-bit mix, so parallel workers can each own an independent generator while the
//! overall result depends only on the master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, index: 0 }
    }

    /// Independent child stream `i`; children of distinct parents do not collide.
    pub fn child(&self, i: u64) -> Self {
        Self {
            seed: mix64(self.seed ^ mix64(self.index)),
            index: i,
        }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}
