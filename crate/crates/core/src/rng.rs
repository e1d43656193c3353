//! Seeded, splittable random streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A deterministic random stream: ChaCha8 keyed by a 64-bit seed.
///
/// ChaCha is counter-based, so the draw sequence for a seed is identical on
/// every platform. Independent child streams are obtained with [`RngStream::split`],
/// which selects a different ChaCha stream under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A fresh stream derived from this stream's seed and `stream_id`.
    /// Does not depend on how many values have been drawn from `self`.
    pub fn split(&self, stream_id: u64) -> RngStream {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        // Stream 0 is the parent itself.
        inner.set_stream(stream_id.wrapping_add(1));
        RngStream { seed: self.seed, inner }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
