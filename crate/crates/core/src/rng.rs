//! Seeded, order-independent random streams.
//!
//! Every consumer of randomness derives its own stream from the run seed and
//! a tuple of integer coordinates (episode, time step, rollout index, ...), so
//! results never depend on which worker evaluates which rollout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Distinct tags keep e.g. control sampling and process
/// noise draws from colliding when they share the other coordinates.
pub mod tag {
    pub const INIT_STATE: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const PROCESS_NOISE: u64 = 3;
    pub const EXECUTION: u64 = 4;
    pub const WINDOWS: u64 = 5;
    pub const PARAM_INIT: u64 = 6;
    pub const EXPLORE: u64 = 7;
    pub const DEMO: u64 = 8;
    pub const EVAL: u64 = 9;
    pub const TRAIN: u64 = 10;
}

/// Identifies one reproducible stream of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Stream addressed by a coordinate path, e.g. `[tag::ROLLOUT, episode, t, j]`.
    pub fn derive(seed: u64, coords: &[u64]) -> Self {
        let stream = coords
            .iter()
            .fold(0x5EED_0000_0000_0001u64, |acc, &c| splitmix64(acc ^ splitmix64(c)));
        Self { seed, stream }
    }

    /// Child stream of this one.
    pub fn child(&self, coords: &[u64]) -> Self {
        let mut path = Vec::with_capacity(coords.len() + 1);
        path.push(self.stream);
        path.extend_from_slice(coords);
        Self::derive(self.seed, &path)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
