//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`Seed`] that was
//! derived from one root seed by a fixed splitting rule:
//!
//! ```text
//! child(parent, tag) = splitmix64(parent ^ splitmix64(tag + 0x9E3779B97F4A7C15))
//! ```
//!
//! A `Seed` turns into a `ChaCha8Rng` via `seed_from_u64`. Because a child
//! depends only on its parent and its tag, results do not depend on the
//! order in which work items run, which keeps parallel sweeps reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The generator type used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Well-known stream tags.
pub mod stream {
    pub const MODEL: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const INIT: u64 = 4;
    pub const KMEANS: u64 = 5;
    pub const BASELINE: u64 = 6;
    pub const PCA: u64 = 7;
    pub const DATA: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn derive(self, tag: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(tag)))
    }

    /// Derives through a path of tags, left to right.
    pub fn derive_path(self, tags: &[u64]) -> Seed {
        tags.iter().fold(self, |s, &t| s.derive(t))
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}
