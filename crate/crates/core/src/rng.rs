//! Counter-derived seeding: every (master seed, stream, replica) triple maps
//! to its own generator, so ensembles do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Stream tags for the independent families of draws.
pub mod stream {
    pub const FBM: u64 = 0;
    pub const ROSENBLATT: u64 = 1 << 32;
    pub const CHAOS: u64 = 2 << 32;
    pub const CHAOS_DESIGN: u64 = 3 << 32;
    pub const INTEGRANDS: u64 = 4 << 32;
    pub const GAUSSIAN_PATHS: u64 = 5 << 32;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit child seed of `(master, stream, index)`.
pub fn child_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(master) ^ stream) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Independent generator for one replica of one stream.
pub fn substream(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, stream, index))
}

pub fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn fill_normals<T: Real, R: Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for v in out {
        *v = normal(rng);
    }
}
