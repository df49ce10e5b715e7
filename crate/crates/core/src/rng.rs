//! Counter-based random streams.
//!
//! Every path draws from its own ChaCha8 stream keyed by `(seed, domain)`
//! with the stream id set to the path index, so a path's normals do not
//! depend on which worker generates it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Separates independent uses of one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Paths = 1,
    Remainder = 2,
    Fbm = 3,
}

fn key(seed: u64, domain: Domain) -> [u8; 32] {
    // SplitMix64 expansion of (seed, domain) into a 256-bit ChaCha key.
    let mut state = seed ^ ((domain as u64) << 56) ^ 0x6a09_e667_f3bc_c908;
    let mut out = [0u8; 32];
    for chunk in out.chunks_mut(8) {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    out
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed, domain));
    rng.set_stream(index);
    rng
}

pub fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}
