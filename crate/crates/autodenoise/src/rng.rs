//! Deterministic seed derivation.
//!
//! Every stochastic consumer (initializers, dropout, action sampling,
//! shuffles) gets its own ChaCha8 stream derived from a base seed plus a
//! role tag and loop indices. Streams never alias, so adding or removing a
//! consumer in one part of a run cannot shift the draws seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream roles. Values are arbitrary but frozen: changing them changes
/// every seeded run.
pub mod role {
    pub const TEACHER: u64 = 0x01;
    pub const PAIRS: u64 = 0x02;
    pub const LABELS: u64 = 0x03;
    pub const SPLIT_SHUFFLE: u64 = 0x04;
    pub const NOISE_MASK: u64 = 0x05;

    pub const MODEL_REINIT: u64 = 0x10;
    pub const MODEL_TRAIN_FWD: u64 = 0x11;
    pub const TRAIN_SHUFFLE: u64 = 0x13;
    pub const BATCH_DROP: u64 = 0x14;

    pub const POLICY_INIT: u64 = 0x20;
    pub const POLICY_A1: u64 = 0x21;
    pub const POLICY_A2: u64 = 0x22;
    pub const VAL_SELECT: u64 = 0x23;

    pub const WARMUP_EPOCH: u64 = 0x30;
    pub const SEARCH_EPOCH: u64 = 0x31;
    pub const VALIDATION: u64 = 0x32;
    pub const VAL_TRAIN: u64 = 0x33;
    pub const CONTROL_TRAIN: u64 = 0x34;
}

/// Mixes `base` with `tags` into a new 64-bit seed (SplitMix64 finalizer
/// applied per tag). Stable across platforms.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = base ^ 0x9E37_79B9_7F4A_7C15;
    for &t in tags {
        s = s.wrapping_add(t).wrapping_add(0x9E37_79B9_7F4A_7C15);
        s = (s ^ (s >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        s = (s ^ (s >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        s ^= s >> 31;
    }
    s
}

/// ChaCha8 stream for `(base, tags)`.
pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
