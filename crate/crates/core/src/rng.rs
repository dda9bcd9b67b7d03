//! Counter-based random streams and direction samplers.
//!
//! A [`RandomStream`] is a `(seed, counter)` pair. Every draw builds a
//! ChaCha8 generator keyed by the seed and positioned on the stream selected
//! by the counter, so a given `(seed, counter)` always reproduces the same
//! draw and independent seeds never share state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZoError};
use crate::linalg::norm_sq;

const FORK_TAG: u64 = 0xA076_1D64_78BD_642F;
const SPLIT_TAG: u64 = 0xE703_7ED1_A0B4_28DB;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    counter: u64,
    key: [u8; 32],
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::at(seed, 0)
    }

    /// Stream positioned at an explicit draw index.
    pub fn at(seed: u64, counter: u64) -> Self {
        let mut key = [0u8; 32];
        let mut s = seed;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self { seed, counter, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Generator for the next draw; advances the counter by one.
    pub fn next_rng(&mut self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(self.counter);
        self.counter += 1;
        rng
    }

    /// Deterministic child stream; advances the counter by one.
    pub fn fork(&mut self) -> RandomStream {
        let child = splitmix64(self.seed ^ FORK_TAG) ^ splitmix64(self.counter);
        self.counter += 1;
        RandomStream::new(splitmix64(child))
    }

    /// The `index`-th substream. Does not advance `self`, so the same index
    /// always yields the same substream.
    pub fn split(&self, index: u64) -> RandomStream {
        let child = splitmix64(self.seed ^ SPLIT_TAG)
            ^ splitmix64(self.counter.wrapping_mul(0x9E37_79B9).wrapping_add(index));
        RandomStream::new(splitmix64(child ^ index.rotate_left(29)))
    }

    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.next_rng())
    }

    pub fn next_uniform(&mut self) -> f64 {
        self.next_rng().random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.next_rng().random_range(0..n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    UnitSphere,
    UnitBall,
    StandardGaussian,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSample {
    pub vector: Vec<f64>,
    pub distribution: Distribution,
    /// Stream state that produced the draw: `RandomStream::at(seed, counter)`
    /// regenerates it.
    pub seed: u64,
    pub counter: u64,
}

impl DirectionSample {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        Err(ZoError::Dimension(d))
    } else {
        Ok(())
    }
}

fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn sphere_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, d);
        let n2 = norm_sq(&v);
        // an exactly-zero draw has probability zero but is representable
        if n2 > 0.0 && n2.is_finite() {
            // divide rather than scale by the reciprocal so d = 1 gives exactly +-1
            let n = n2.sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// Draw one direction from `distribution`.
pub fn sample(
    distribution: Distribution,
    stream: &mut RandomStream,
    d: usize,
) -> Result<DirectionSample> {
    check_dim(d)?;
    let (seed, counter) = (stream.seed, stream.counter);
    let mut rng = stream.next_rng();
    let vector = match distribution {
        Distribution::UnitSphere => sphere_vec(&mut rng, d),
        Distribution::UnitBall => {
            let mut v = sphere_vec(&mut rng, d);
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            v.iter_mut().for_each(|x| *x *= r);
            v
        }
        Distribution::StandardGaussian => gaussian_vec(&mut rng, d),
        Distribution::Rademacher => (0..d)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect(),
    };
    Ok(DirectionSample {
        vector,
        distribution,
        seed,
        counter,
    })
}

pub fn sample_sphere(stream: &mut RandomStream, d: usize) -> Result<DirectionSample> {
    sample(Distribution::UnitSphere, stream, d)
}

pub fn sample_ball(stream: &mut RandomStream, d: usize) -> Result<DirectionSample> {
    sample(Distribution::UnitBall, stream, d)
}

pub fn sample_gaussian(stream: &mut RandomStream, d: usize) -> Result<DirectionSample> {
    sample(Distribution::StandardGaussian, stream, d)
}

pub fn sample_rademacher(stream: &mut RandomStream, d: usize) -> Result<DirectionSample> {
    sample(Distribution::Rademacher, stream, d)
}
