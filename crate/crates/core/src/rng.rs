//! Seed derivation for independent random streams.
//!
//! Every consumer of randomness (a client's minibatch sampler in a given
//! round, the selection step of a round, the dataset generator of a client)
//! gets its own ChaCha stream keyed by a hash of `(seed, domain, a, b)`. Work
//! can then be reordered or run concurrently without changing any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains. Keeping them distinct guarantees that, e.g., client 3 in
/// round 5 never shares a stream with the selection step of round 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    LocalUpdate = 0x6c6f_6361_6c00_0001,
    Selection = 0x7365_6c65_6374_0002,
    Synthetic = 0x7379_6e74_6800_0003,
    Partition = 0x7061_7274_6900_0004,
    Init = 0x696e_6974_0000_0005,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, domain: Domain, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ domain as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(32))
}

pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, domain, a, b))
}
