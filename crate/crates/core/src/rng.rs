//! Seed splitting.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator
//! keyed by the root seed, with a 64-bit stream id selecting the
//! independent substream. The stream id is `(domain << 48) | index`, where
//! `domain` names the consumer (trace sampling, link chunks, ...) and
//! `index` is the chunk or task number. Parallel tasks therefore never
//! share a stream, and results do not depend on scheduling order.
//!
//! Derived root seeds (one per satellite entry, per selftest run, ...) are
//! produced with [`derive_seed`], a SplitMix64 finalizer over `root ^ tag`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Trace = 1,
    LinkChunk = 2,
    LocalChunk = 3,
    Background = 4,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << 48));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | index);
    rng
}

pub fn derive_seed(root: u64, tag: u64) -> u64 {
    let mut z = (root ^ tag.rotate_left(29)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
