//! Seeded, hierarchically split randomness.
//!
//! Every run starts from one root seed. Independent consumers (model fitting,
//! acquisition, decision-maker simulation, ...) derive their own streams by
//! mixing labels into the root, so changing how many draws one consumer takes
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PboRng = ChaCha8Rng;

/// Well-known stream labels.
pub mod stream {
    pub const INIT_DESIGN: u64 = 1;
    pub const DM: u64 = 2;
    pub const MODEL_FIT: u64 = 3;
    pub const ACQUISITION: u64 = 4;
    pub const RECOMMEND: u64 = 5;
    pub const CALIBRATION: u64 = 6;
    pub const TRUTH: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of labels into a parent seed.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(parent), |acc, &l| splitmix64(acc ^ splitmix64(l.wrapping_add(0xA076_1D64_78BD_642F))))
}

pub fn rng_from_seed(seed: u64) -> PboRng {
    PboRng::seed_from_u64(seed)
}

/// A node in the seed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree(pub u64);

impl SeedTree {
    pub fn new(root: u64) -> Self {
        Self(root)
    }

    pub fn child(&self, label: u64) -> SeedTree {
        SeedTree(derive_seed(self.0, &[label]))
    }

    pub fn child2(&self, a: u64, b: u64) -> SeedTree {
        SeedTree(derive_seed(self.0, &[a, b]))
    }

    pub fn rng(&self) -> PboRng {
        rng_from_seed(self.0)
    }
}
