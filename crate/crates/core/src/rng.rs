//! Seeded, splittable random streams.
//!
//! Every stochastic step in the crate draws from an [`RngStream`] identified by
//! `(seed, stream_id)`. Child streams are derived by hashing a label and an
//! index into a new stream id, so per-fold or per-feature work can run in any
//! order (or in parallel) without changing the numbers it produces.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream for a named sub-task. Depends only on this stream's
    /// identity, never on how many draws it has made.
    pub fn derive(&self, label: &str, index: u64) -> RngStream {
        let id = splitmix64(self.stream_id ^ splitmix64(fnv1a(label) ^ splitmix64(index)));
        RngStream::new(self.seed, id)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

/// `n` i.i.d. standard-normal draws.
pub fn standard_normal(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
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

#[derive(Serialize, Deserialize)]
struct StreamId {
    seed: u64,
    stream_id: u64,
}

// Only the identity is persisted; a deserialized stream restarts from its
// first draw.
impl Serialize for RngStream {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        StreamId {
            seed: self.seed,
            stream_id: self.stream_id,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RngStream {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let id = StreamId::deserialize(d)?;
        Ok(RngStream::new(id.seed, id.stream_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_draws() {
        let a = standard_normal(&mut RngStream::new(1, 0), 3);
        let b = standard_normal(&mut RngStream::new(1, 0), 3);
        assert_eq!(a, b);
        let c = standard_normal(&mut RngStream::new(1, 1), 3);
        assert_ne!(a, c);
    }

    #[test]
    fn moments_of_a_million_draws() {
        let xs = standard_normal(&mut RngStream::new(7, 0), 1_000_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn derive_ignores_parent_position() {
        let parent = RngStream::new(3, 9);
        let mut advanced = parent.clone();
        advanced.uniform();
        let mut a = parent.derive("fold", 2);
        let mut b = advanced.derive("fold", 2);
        assert_eq!(a.uniform(), b.uniform());
        let mut c = parent.derive("fold", 3);
        let mut d = parent.derive("feature", 2);
        let first = parent.derive("fold", 2).uniform();
        assert_ne!(first, c.uniform());
        assert_ne!(first, d.uniform());
    }

    #[test]
    fn independent_streams_are_uncorrelated() {
        let root = RngStream::new(11, 0);
        let a = standard_normal(&mut root.derive("x", 0), 200_000);
        let b = standard_normal(&mut root.derive("x", 1), 200_000);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
        assert!(corr.abs() < 0.01, "corr {corr}");
    }
}
