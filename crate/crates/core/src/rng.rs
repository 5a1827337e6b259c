use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Main stream for a seed.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream for item `index` of purpose `tag`, so per-item draws
/// do not depend on how work is split across threads.
pub fn substream(seed: u64, tag: u64, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

pub(crate) const TAG_BETA: u64 = 1;
pub(crate) const TAG_DOC: u64 = 2;
pub(crate) const TAG_SAMPLE: u64 = 3;
pub(crate) const TAG_HEAVY: u64 = 4;
pub(crate) const TAG_COMMON: u64 = 5;
pub(crate) const TAG_PAIRS: u64 = 6;
