//! Reproducible random streams.
//!
//! Every replicate (or grid point, or path) draws from its own ChaCha8
//! stream selected by `(master_seed, domain, index)`. Streams are
//! addressed, not chained, so results do not depend on execution order or
//! thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains keep independent consumers of one master seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Branching = 1,
    Disperser = 2,
    Lyapunov = 3,
    Corpus = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream for `index` within `domain` under `master_seed`.
pub fn stream(master_seed: u64, domain: Domain, index: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&splitmix64(master_seed).to_le_bytes());
    seed[8..16].copy_from_slice(&splitmix64(master_seed ^ 0x5851_f42d_4c95_7f2d).to_le_bytes());
    seed[16..24].copy_from_slice(&(domain as u64).to_le_bytes());
    seed[24..].copy_from_slice(&splitmix64(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}
