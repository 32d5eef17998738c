//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha8 stream addressed by
//! `(master seed, namespace, index)`. Streams never depend on how work is
//! scheduled, so results are identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// A node in the seed hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
    key: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master, key: mix(master) }
    }

    /// The master seed this tree was derived from.
    pub fn master(&self) -> u64 {
        self.master
    }

    /// Derive an independent sub-tree for a named purpose.
    pub fn child(&self, namespace: &str) -> Self {
        Self {
            master: self.master,
            key: mix(self.key ^ fnv1a(namespace.as_bytes())),
        }
    }

    /// Derive an independent sub-tree for an indexed purpose (time point,
    /// iteration, ...).
    pub fn child_index(&self, index: u64) -> Self {
        Self {
            master: self.master,
            key: mix(self.key.wrapping_add(mix(index ^ 0x5851_f42d_4c95_7f2d))),
        }
    }

    /// The random stream with the given index under this node.
    pub fn stream(&self, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
