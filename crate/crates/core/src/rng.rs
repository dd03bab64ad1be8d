//! Seed derivation. Every random draw in the crate comes from a generator
//! keyed by `(seed, stream, a, b)`, so results never depend on execution order
//! or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Scene = 1,
    MlpWeights = 2,
    Init = 3,
    Select = 4,
    Fill = 5,
    Resample = 6,
    Perturb = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: Stream, a: u64, b: u64) -> Rng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ stream as u64);
    h = splitmix(h ^ a);
    h = splitmix(h ^ b.rotate_left(17));
    Rng::seed_from_u64(h)
}
