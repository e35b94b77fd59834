//! Counter-based Gaussian noise.
//!
//! Every draw is a pure function of `(seed, batch, stream, step, index)`:
//!
//! 1. the five words are folded into one 64-bit key with the SplitMix64
//!    finalizer applied after each word (`key = mix(key ^ word + GOLDEN)`),
//! 2. two uniforms in `(0, 1]` come from `mix(key)` and `mix(key ^ 1)`
//!    (top 53 bits),
//! 3. Box-Muller turns the pair into two standard normals; `index` selects
//!    the pair `index / 2` and the cosine or sine branch by parity.
//!
//! No generator state is carried between draws, so results do not depend on
//! how batches are scheduled across threads.

use std::f64::consts::TAU;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent families of draws within one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Increment = 1,
    InitialVelocity = 2,
    InitialPosition = 3,
    Auxiliary = 4,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn key(words: [u64; 5]) -> u64 {
    words
        .iter()
        .fold(0u64, |k, w| mix((k ^ w).wrapping_add(GOLDEN)))
}

#[inline]
fn unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Noise source bound to one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `(0, 1]`.
    pub fn uniform(&self, batch: u64, stream: Stream, step: u64, index: u64) -> f64 {
        unit(mix(key([self.seed, batch, stream as u64, step, index])))
    }

    /// Standard normal draw.
    pub fn normal(&self, batch: u64, stream: Stream, step: u64, index: u64) -> f64 {
        let k = key([self.seed, batch, stream as u64, step, index / 2]);
        let u1 = unit(mix(k));
        let u2 = unit(mix(k ^ 1));
        let r = (-2.0 * u1.ln()).sqrt();
        if index % 2 == 0 {
            r * (TAU * u2).cos()
        } else {
            r * (TAU * u2).sin()
        }
    }

    /// Fills `out` with standard normals `index = 0..out.len()`.
    pub fn fill_normal(&self, batch: u64, stream: Stream, step: u64, out: &mut [f64]) {
        let mut j = 0;
        while j < out.len() {
            let k = key([self.seed, batch, stream as u64, step, (j / 2) as u64]);
            let u1 = unit(mix(k));
            let u2 = unit(mix(k ^ 1));
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (TAU * u2).sin_cos();
            out[j] = r * c;
            if j + 1 < out.len() {
                out[j + 1] = r * s;
            }
            j += 2;
        }
    }
}
