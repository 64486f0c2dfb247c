//! Deterministic random streams.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the
//! master seed. Independent consumers get their own *stream*: the 64-bit
//! stream id is a SplitMix64 fold of a path such as
//! `[ROLLOUT, iteration, slot]`. Because ChaCha is counter based, streams
//! never overlap and the result does not depend on the order in which
//! consumers are created, which keeps parallel rollouts reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// First path component for each consumer.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const MINIBATCH: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const ENV: u64 = 5;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path into a stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter().fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix(h ^ splitmix(p)))
}

/// Generator for `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream_id(path));
    r
}

/// Seeds a child generator from a parent. Used to hand an environment its
/// own stream at reset time.
pub fn child(parent: &mut Rng) -> Rng {
    use rand::RngCore;
    ChaCha8Rng::seed_from_u64(parent.next_u64())
}
