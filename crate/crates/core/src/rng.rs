//! Reproducible random streams.
//!
//! Every episode is driven by ChaCha8 (a published, platform-independent
//! generator). The per-episode seed is derived from `(base_seed, n, replication)`
//! with the SplitMix64 finalizer:
//!
//! ```text
//! seed = mix(mix(mix(base_seed) ^ n) ^ replication)
//! mix(z): z += 0x9E3779B97F4A7C15
//!         z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!         z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!         z ^ (z >> 31)
//! ```
//!
//! The seed is expanded by `ChaCha8Rng::seed_from_u64`. The environment and
//! the policy draw from distinct ChaCha stream ids of the same key, so
//! swapping policies never perturbs the covariate/outcome sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Stream id used for covariates and potential outcomes.
pub const ENVIRONMENT_STREAM: u64 = 0;
/// Stream id handed to policies (only randomized baselines consume it).
pub const POLICY_STREAM: u64 = 1;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn episode_seed(base_seed: u64, horizon: u64, replication: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ horizon) ^ replication)
}

pub fn stream(seed: u64, stream_id: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
