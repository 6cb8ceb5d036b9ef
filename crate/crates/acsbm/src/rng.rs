//! Deterministic seed derivation.
//!
//! Every randomized stage of the crate takes an explicit `u64` seed and
//! derives independent child seeds from it, so results never depend on
//! thread scheduling or on how many other stages ran before. The mixing
//! function is splitmix64, which is a solid bijective finalizer and cheap
//! enough to call per replicate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 output function: decorrelates consecutive or structured inputs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path of tags (stage index,
/// replicate index, block ordinal, ...). Different paths give independent
/// streams; the same path always gives the same stream.
pub fn child_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x243f_6a88_85a3_08d3);
    for &tag in path {
        state = splitmix64(state ^ splitmix64(tag.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

/// The crate-wide RNG: small, fast, seedable, identical on every platform.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
