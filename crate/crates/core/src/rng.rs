//! Seedable, splittable random streams.
//!
//! Every stream is a ChaCha8 keystream addressed by `(key, stream id)`.
//! Substreams are derived from the parent's key and an index, never from the
//! parent's consumed state, so parallel work gets the same numbers no matter
//! how it is scheduled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(key: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(key);
        inner.set_stream(stream);
        RngStream { key, stream, inner }
    }

    /// Independent child stream number `index`.
    pub fn substream(&self, index: u64) -> RngStream {
        let key = splitmix64(self.key ^ splitmix64(self.stream.wrapping_add(0x5851_F42D)));
        Self::with_stream(key, index)
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}

impl RngCore for RngStream {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_numbers() {
        let mut a = RngStream::new(11);
        let mut b = RngStream::new(11);
        for _ in 0..32 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn substreams_ignore_parent_consumption() {
        let parent = RngStream::new(3);
        let mut used = parent.clone();
        for _ in 0..100 {
            used.next_u64();
        }
        let mut x = parent.substream(5);
        let mut y = used.substream(5);
        assert_eq!(x.next_u64(), y.next_u64());
        let mut z = parent.substream(6);
        assert_ne!(parent.substream(5).next_u64(), z.next_u64());
    }

    #[test]
    fn open01_is_open() {
        let mut r = RngStream::new(0);
        for _ in 0..10_000 {
            let u = r.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
