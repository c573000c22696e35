//! Counter-based random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream addressed by
//! `(seed, domain, index)`. The 64-bit ChaCha stream id carries the index, so
//! path `i` sees the same numbers no matter which worker runs it or in which
//! order batches complete.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as Stream;

/// Stream domains. Distinct domains never share a key even for equal seeds.
pub mod domain {
    pub const PATHS: u64 = 0x5041_5448;
    pub const DRIFT: u64 = 0x4452_4946;
    pub const ANGLE: u64 = 0x414e_474c;
    pub const BIGJUMP: u64 = 0x4249_474a;
    pub const TEST: u64 = 0x5445_5354;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: u64, index: u64) -> Stream {
    let key = splitmix64(seed ^ splitmix64(domain));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1); never returns 0 or 1.
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw on [0, 1).
#[inline]
pub fn unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
