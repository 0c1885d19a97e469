//! Labeled sub-seeding.
//!
//! Every random stream in a run is derived from one master seed plus a
//! (stream id, purpose tag) pair, so adding a new consumer never perturbs the
//! draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stream. ChaCha output is specified bit-for-bit,
/// which keeps runs reproducible across platforms.
pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from `base` for stream `stream` and purpose `tag`.
pub fn derive_seed(base: u64, stream: u64, tag: &str) -> u64 {
    let h = splitmix64(base ^ fnv1a(tag));
    splitmix64(h ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn stream(base: u64, stream: u64, tag: &str) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, stream, tag))
}
