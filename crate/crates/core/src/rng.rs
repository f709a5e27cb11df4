//! Named random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! `(master seed, purpose, index)`. Changing how many inference samples are
//! drawn therefore never perturbs the teacher, the dataset, or the test inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream id and
/// must never be reordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Teacher = 1,
    Data = 2,
    TestInputs = 3,
    Inference = 4,
    Judge = 5,
    Extreme = 6,
    Selection = 7,
    SyntheticJudge = 8,
}

const INDEX_BITS: u32 = 56;

/// Independent generator for `(seed, purpose, index)`.
///
/// `index` distinguishes chunks or repetitions within one purpose and must be
/// below 2^56.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    debug_assert!(index < (1u64 << INDEX_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << INDEX_BITS) | index);
    rng
}
