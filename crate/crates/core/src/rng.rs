//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`RngStream`]. The generator is
//! ChaCha8 (`rand_chacha`) seeded through `seed_from_u64`; Gaussian draws use the
//! ziggurat sampler of `rand_distr::StandardNormal`. The identifier returned by
//! [`RngStream::algorithm`] is written into every output file.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::vector::ParamVector;

pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9/seed_from_u64+set_stream;normal=ziggurat/rand_distr-0.5";

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent substream of `seed`. Streams with different ids never overlap.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// `k` distinct indices drawn uniformly from `0..n`, in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        index::sample(&mut self.rng, n, k).into_vec()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }
}

/// Vector of i.i.d. standard-normal entries.
pub fn sample_standard_gaussian(rng: &mut RngStream, dim: usize) -> Result<ParamVector> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be >= 1"));
    }
    let mut values = vec![0.0; dim];
    rng.fill_standard_normal(&mut values);
    ParamVector::new(values)
}
