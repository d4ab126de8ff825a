//! Normal duration models and the seeded random source that realizes them.
//!
//! Every latency the estimator reasons about (a link transfer, a processing
//! job, an end-to-end delivery) is a [`GaussianModel`]. Independent stages
//! compose with [`GaussianModel::convolve`], and the probability of meeting a
//! deadline is read off with [`GaussianModel::cdf_at`].

use std::fmt;

use libm::erfc;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rejection attempts in [`sample_truncated`] before clamping to the floor.
pub const TRUNCATION_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mean must be finite, got {0}")]
    NonFiniteMean(f64),
    #[error("stddev must be finite and >= 0, got {0}")]
    InvalidStddev(f64),
}

/// A normal distribution over a duration in seconds.
///
/// `stddev == 0` is a degenerate (deterministic) duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian", into = "RawGaussian")]
pub struct GaussianModel {
    mean: f64,
    stddev: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGaussian {
    mean: f64,
    stddev: f64,
}

impl TryFrom<RawGaussian> for GaussianModel {
    type Error = ModelError;

    fn try_from(raw: RawGaussian) -> Result<Self, Self::Error> {
        GaussianModel::new(raw.mean, raw.stddev)
    }
}

impl From<GaussianModel> for RawGaussian {
    fn from(g: GaussianModel) -> Self {
        RawGaussian {
            mean: g.mean,
            stddev: g.stddev,
        }
    }
}

impl GaussianModel {
    pub const ZERO: GaussianModel = GaussianModel {
        mean: 0.0,
        stddev: 0.0,
    };

    pub fn new(mean: f64, stddev: f64) -> Result<Self, ModelError> {
        if !mean.is_finite() {
            return Err(ModelError::NonFiniteMean(mean));
        }
        if !stddev.is_finite() || stddev < 0.0 {
            return Err(ModelError::InvalidStddev(stddev));
        }
        Ok(GaussianModel { mean, stddev })
    }

    /// A deterministic duration.
    pub fn degenerate(mean: f64) -> Result<Self, ModelError> {
        Self::new(mean, 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stddev(&self) -> f64 {
        self.stddev
    }

    pub fn variance(&self) -> f64 {
        self.stddev * self.stddev
    }

    pub fn is_degenerate(&self) -> bool {
        self.stddev == 0.0
    }

    /// Distribution of the sum of two independent durations.
    ///
    /// The sum of independent normals is normal: means add and variances add.
    pub fn convolve(&self, other: &GaussianModel) -> GaussianModel {
        GaussianModel {
            mean: self.mean + other.mean,
            stddev: self.stddev.hypot(other.stddev),
        }
    }

    /// `P(X <= t)` for `X` distributed as this model.
    pub fn cdf_at(&self, t: f64) -> f64 {
        if self.stddev == 0.0 {
            return if t < self.mean { 0.0 } else { 1.0 };
        }
        standard_normal_cdf((t - self.mean) / self.stddev)
    }

    /// Multiplies mean and stddev by `factor` (a change of time unit).
    pub fn scaled(&self, factor: f64) -> Result<GaussianModel, ModelError> {
        GaussianModel::new(self.mean * factor, self.stddev * factor)
    }

    /// Shifts the mean, keeping the spread.
    pub fn shifted(&self, offset: f64) -> Result<GaussianModel, ModelError> {
        GaussianModel::new(self.mean + offset, self.stddev)
    }
}

impl fmt::Display for GaussianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N({}, {})", self.mean, self.stddev)
    }
}

/// Standard normal CDF, `Phi(z) = erfc(-z / sqrt 2) / 2`.
///
/// `erfc` keeps full relative precision in the lower tail, so the result is
/// accurate to well under 1e-7 absolute everywhere.
pub fn standard_normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Seedable, platform-independent random stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift with rejection; unbiased.
        loop {
            let x = self.inner.next_u64();
            let m = (x as u128) * (n as u128);
            let low = m as u64;
            if low >= n.wrapping_neg() % n {
                return (m >> 64) as u64;
            }
        }
    }

    /// Plain (untruncated) draw from `g`.
    pub fn sample(&mut self, g: &GaussianModel) -> f64 {
        if g.stddev == 0.0 {
            return g.mean;
        }
        g.mean + g.stddev * self.standard_normal()
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

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of indices.
///
/// Each index is folded in as `h = splitmix64(h ^ splitmix64(index + 1))`,
/// starting from `h = splitmix64(parent)`. Distinct index paths give
/// statistically independent streams.
pub fn mix_seed(parent: u64, indices: &[u64]) -> u64 {
    indices.iter().fold(splitmix64(parent), |h, &i| {
        splitmix64(h ^ splitmix64(i.wrapping_add(1)))
    })
}

/// One draw from `g` that is never below `floor`.
///
/// Draws are rejected and retried up to [`TRUNCATION_ATTEMPTS`] times; if all
/// fail the floor itself is returned. Pass `f64::NEG_INFINITY` to disable the
/// truncation.
pub fn sample_truncated(g: &GaussianModel, rng: &mut SeededRng, floor: f64) -> f64 {
    if g.stddev == 0.0 {
        return g.mean.max(floor);
    }
    for _ in 0..TRUNCATION_ATTEMPTS {
        let x = rng.sample(g);
        if x >= floor {
            return x;
        }
    }
    floor
}
