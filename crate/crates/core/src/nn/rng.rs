//! Seeded, platform-independent random source.
//!
//! Every random draw in the crate goes through [`SeededRng`]. A generator is
//! identified by a 64-bit seed and a stream id; ChaCha8 guarantees the same
//! sequence for the same pair on every platform.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well-known stream ids so unrelated consumers never share a sequence.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SYNTHETIC: u64 = 2;
    pub const BATCHES: u64 = 3;
    pub const PCGRAD: u64 = 4;
    pub const EVAL: u64 = 5;
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// A generator on the same stream keyed additionally by `index`
    /// (e.g. an epoch number).
    pub fn derive(seed: u64, stream: u64, index: u64) -> Self {
        Self::new(splitmix64(seed ^ splitmix64(index.wrapping_add(1))), stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
