//! Seeded random streams.
//!
//! Every stochastic operation in the crate draws from an [`RngHandle`], a
//! ChaCha8 stream keyed by a 64-bit seed. ChaCha output is specified
//! bit-for-bit, so a seed reproduces the same draws on every platform.
//!
//! Independent streams are split off a master seed with [`derive_seed`]:
//! the indices are folded through the SplitMix64 finalizer one at a time,
//! `h = mix(h ^ mix(index + GOLDEN))`, starting from `h = mix(master)`.
//! Results therefore depend only on the index tuple, never on the order in
//! which work items are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of the sub-stream addressed by `indices` under `master`.
pub fn derive_seed(master: u64, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix(master), |h, &i| splitmix(h ^ splitmix(i.wrapping_add(GOLDEN))))
}

#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// A fresh stream keyed by `derive_seed(self.seed(), indices)`.
    /// Does not advance `self`.
    pub fn fork(&self, indices: &[u64]) -> Self {
        Self::new(derive_seed(self.seed, indices))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    pub(crate) fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

/// One draw from Beta(alpha, beta) as `X / (X + Y)` with
/// `X ~ Gamma(alpha, 1)` and `Y ~ Gamma(beta, 1)`.
pub fn sample_beta(rng: &mut RngHandle, alpha: f64, beta: f64) -> Result<f64> {
    let (x_dist, y_dist) = beta_gammas(alpha, beta)?;
    Ok(beta_from(rng, &x_dist, &y_dist))
}

/// Sampler for repeated Beta draws with fixed shape parameters.
#[derive(Debug, Clone, Copy)]
pub struct BetaSampler {
    x: Gamma<f64>,
    y: Gamma<f64>,
}

impl BetaSampler {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let (x, y) = beta_gammas(alpha, beta)?;
        Ok(Self { x, y })
    }

    pub fn sample(&self, rng: &mut RngHandle) -> f64 {
        beta_from(rng, &self.x, &self.y)
    }
}

fn beta_gammas(alpha: f64, beta: f64) -> Result<(Gamma<f64>, Gamma<f64>)> {
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(Error::Argument(format!(
            "beta shape parameters must be positive and finite, got ({alpha}, {beta})"
        )));
    }
    let x = Gamma::new(alpha, 1.0).map_err(|e| Error::Argument(e.to_string()))?;
    let y = Gamma::new(beta, 1.0).map_err(|e| Error::Argument(e.to_string()))?;
    Ok((x, y))
}

fn beta_from(rng: &mut RngHandle, x_dist: &Gamma<f64>, y_dist: &Gamma<f64>) -> f64 {
    loop {
        let x = x_dist.sample(rng.inner_mut());
        let y = y_dist.sample(rng.inner_mut());
        let total = x + y;
        // Both gammas can underflow to zero for tiny shapes; redraw.
        if total > 0.0 {
            return (x / total).clamp(0.0, 1.0);
        }
    }
}
