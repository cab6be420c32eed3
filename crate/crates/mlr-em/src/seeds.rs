//! Seed derivation. Every random stream in the crate descends from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PURPOSE_COVARIATES: u64 = 0x636f_7661;
pub const PURPOSE_LABELS: u64 = 0x6c61_6265;
pub const PURPOSE_NOISE: u64 = 0x6e6f_6973;
pub const PURPOSE_INIT: u64 = 0x696e_6974;
pub const PURPOSE_ORACLE: u64 = 0x6f72_6163;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a root seed with a tag into a child seed.
pub fn derive(root: u64, tag: u64) -> u64 {
    splitmix(splitmix(root) ^ tag.rotate_left(17))
}

/// A generator for `(root, purpose)`, positioned on stream `stream`.
pub fn stream_rng(root: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(root, purpose));
    rng.set_stream(stream);
    rng
}
