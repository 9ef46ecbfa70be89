//! Poisson forward model.
//!
//! Every pixel draws from its own ChaCha8 stream selected by
//! `(seed, row-major pixel index)`, so a count image is reproducible bit for
//! bit no matter how the pixels are scheduled across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::Result;
use crate::image::{CountImage, Image, IntensityImage};

/// Means below this use sequential inversion, at or above it PTRS.
const INVERSION_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSeed(pub u64);

/// Random stream for one pixel.
pub fn pixel_rng(seed: NoiseSeed, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    rng.set_stream(index);
    rng
}

/// Uniform on the open interval (0, 1) from the top 53 bits of one draw.
#[inline]
pub fn uniform_open<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One Poisson(mean) variate.
pub fn poisson_draw<R: RngCore>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        0
    } else if mean < INVERSION_LIMIT {
        inversion(mean, rng)
    } else {
        ptrs(mean, rng)
    }
}

fn inversion<R: RngCore>(mean: f64, rng: &mut R) -> u32 {
    let u = uniform_open(rng);
    let mut k = 0u32;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // the tail beyond 1000 has negligible mass for mean < 10
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Hörmann's transformed rejection with squeeze.
fn ptrs<R: RngCore>(mean: f64, rng: &mut R) -> u32 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = uniform_open(rng) - 0.5;
        let v = uniform_open(rng);
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u32;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u32;
        }
    }
}

/// `ln(k!)`, exact summation for small `k`, Stirling series beyond.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = (k + 1) as f64;
    let x2 = x * x;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x * x2 * x2)
}

/// Independent Poisson counts with per-pixel means taken from `f`.
pub fn sample_poisson(f: &IntensityImage, seed: NoiseSeed) -> CountImage {
    let counts: Vec<u32> = f
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &mean)| {
            if mean == 0.0 {
                0
            } else {
                poisson_draw(mean, &mut pixel_rng(seed, i as u64))
            }
        })
        .collect();
    Image::new(f.side(), counts).expect("same grid as input")
}

/// Noise realisation `ε = Y − f`, row-major.
pub fn residual(f: &IntensityImage, y: &CountImage) -> Result<Vec<f64>> {
    f.ensure_same_grid(y)?;
    Ok(y.as_slice()
        .iter()
        .zip(f.as_slice())
        .map(|(&y, &f)| y as f64 - f)
        .collect())
}
