//! Seeds and seed derivation.
//!
//! Every stochastic operation takes an explicit [`RngSeed`] and draws from
//! ChaCha8. Child seeds are derived with a SplitMix64 finalizer so that
//! ensembles and training steps are reproducible without storing seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Deterministic child seed for stream `index`.
    pub fn derive(self, index: u64) -> RngSeed {
        let mixed = splitmix64(self.0 ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        RngSeed(mixed)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
