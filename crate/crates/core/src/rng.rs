//! Counter-based random streams.
//!
//! A master seed expands into one independent ChaCha8 stream per
//! `(experiment, replicate)` pair. The replicate seed depends only on the
//! triple, so adding replicates or running them in a different order never
//! changes the streams of existing replicates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of replicate `replicate` of `experiment` under `master`.
pub fn replicate_seed(master: u64, experiment: &str, replicate: u64) -> u64 {
    let key = splitmix64(master ^ fnv1a(experiment));
    splitmix64(key ^ splitmix64(replicate.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Derive a child seed from a parent seed and an index.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xd134_2543_de82_ef95))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedBank {
    master: u64,
}

impl SeedBank {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn seed(&self, experiment: &str, replicate: u64) -> u64 {
        replicate_seed(self.master, experiment, replicate)
    }

    pub fn rng(&self, experiment: &str, replicate: u64) -> StreamRng {
        stream(self.seed(experiment, replicate))
    }
}
