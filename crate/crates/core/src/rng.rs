//! Counter-based random substreams.
//!
//! Every random quantity in the workbench is drawn from a ChaCha8 stream
//! addressed by `(seed, domain, index)`. A block or sample always sees the same
//! numbers no matter which worker thread evaluates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating independent uses of a single run seed.
pub mod domain {
    pub const SAMPLE_W: u64 = 0x5157;
    pub const TRAIN_BATCH: u64 = 0x7472;
    pub const VALIDATION: u64 = 0x7661;
    pub const EVALUATION: u64 = 0x6576;
    pub const CAMPAIGN_CODE: u64 = 0x6363;
    pub const CAMPAIGN_EVAL: u64 = 0x6365;
    pub const INIT: u64 = 0x696e;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of keys.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(seed), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Independent stream number `index` of the generator keyed by `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
