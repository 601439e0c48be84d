//! Seeded sampling helpers. Every randomized routine takes its generator
//! or seed explicitly.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::num::{cos, exp, ln, sqrt};

/// Deterministic generator for a seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters of a ball sampler around an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSampler {
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
}

impl BallSampler {
    pub fn new(count: usize, radius: f64, seed: u64) -> Self {
        BallSampler {
            count,
            radius,
            seed,
        }
    }
}

/// Smallest sampled radius as a fraction of the ball radius.
pub const MIN_RADIUS_FRACTION: f64 = 1e-6;

/// Standard normal deviate (Box–Muller).
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    sqrt(-2.0 * ln(u1)) * cos(2.0 * PI * u2)
}

/// Uniform direction on the unit sphere in `dim` dimensions.
pub fn direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Offset with uniform direction and log-uniform length in
/// `[radius·MIN_RADIUS_FRACTION, radius]`.
///
/// Log-uniform radii put samples at every scale around the anchor, which is
/// where one-sidedness and sublevel violations show up first.
pub fn multiscale_offset<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let dir = direction(rng, dim);
    let lo = ln(MIN_RADIUS_FRACTION);
    let r = radius * exp(lo * rng.gen::<f64>());
    dir.into_iter().map(|x| x * r).collect()
}

/// Offset uniform in the ball of the given radius.
pub fn uniform_ball_offset<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let dir = direction(rng, dim);
    let u: f64 = rng.gen::<f64>();
    let r = radius * libm::pow(u, 1.0 / dim as f64);
    dir.into_iter().map(|x| x * r).collect()
}
