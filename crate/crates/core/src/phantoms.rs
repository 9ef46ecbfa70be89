//! Synthetic test intensities.
//!
//! The five named phantoms mimic the scenes used to tune the filter (spots,
//! a galaxy, ridges, a textured photo, cell filaments) with the same dynamic
//! ranges. They are closed-form, so every render is deterministic. The Hölder
//! family drives the rate experiments.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{IntensityImage, PixelGrid};
use crate::pipeline::FilterConfig;
use crate::theory::HolderSpec;

/// Version tag of the phantom formulas; bump when any formula changes.
pub const PHANTOM_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phantom {
    Spots,
    Galaxy,
    Ridges,
    Barbara,
    Cells,
}

impl Phantom {
    pub const ALL: [Phantom; 5] = [
        Phantom::Spots,
        Phantom::Galaxy,
        Phantom::Ridges,
        Phantom::Barbara,
        Phantom::Cells,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Phantom::Spots => "spots",
            Phantom::Galaxy => "galaxy",
            Phantom::Ridges => "ridges",
            Phantom::Barbara => "barbara",
            Phantom::Cells => "cells",
        }
    }

    /// Nominal intensity range `[min, max]`.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Phantom::Spots => (0.03, 5.02),
            Phantom::Galaxy => (0.0, 5.0),
            Phantom::Ridges => (0.05, 0.85),
            Phantom::Barbara => (0.93, 15.73),
            Phantom::Cells => (0.53, 16.93),
        }
    }

    /// Recommended filter configuration for this scene.
    pub fn recommended_config(&self) -> FilterConfig {
        FilterConfig::preset_by_name(self.name()).expect("every phantom has a preset")
    }

    pub fn render(&self, side: usize) -> Result<IntensityImage> {
        let grid = PixelGrid::new(side)?;
        let eval: fn(f64, f64) -> f64 = match self {
            Phantom::Spots => spots,
            Phantom::Galaxy => galaxy,
            Phantom::Ridges => ridges,
            Phantom::Barbara => barbara,
            Phantom::Cells => cells,
        };
        IntensityImage::from_fn(side, |p| {
            let (u, v) = grid.unit_coords(p);
            eval(u, v)
        })
    }
}

impl fmt::Display for Phantom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phantom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phantom::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown phantom '{s}'")))
    }
}

fn gauss(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

// 6×6 lattice of Gaussian spots: radius grows along columns, amplitude
// geometrically along rows from 0.08 to 4.99, on a 0.03 background.
fn spots(u: f64, v: f64) -> f64 {
    let mut peak: f64 = 0.0;
    for i in 0..6 {
        let amp = 0.08 * (4.99f64 / 0.08).powf(i as f64 / 5.0);
        let cu = (i as f64 + 0.5) / 6.0;
        for j in 0..6 {
            let sigma = 0.004 + 0.003 * j as f64;
            let cv = (j as f64 + 0.5) / 6.0;
            let d2 = (u - cu).powi(2) + (v - cv).powi(2);
            peak = peak.max(amp * gauss(d2, sigma));
        }
    }
    0.03 + peak
}

// Bulge plus two logarithmic arms, tapered towards radius 0.45 and cut to
// zero sky below 0.05.
fn galaxy(u: f64, v: f64) -> f64 {
    let (x, y) = (u - 0.5, v - 0.5);
    let r = x.hypot(y);
    if r >= 0.45 {
        return 0.0;
    }
    let theta = y.atan2(x);
    let bulge = gauss(r * r, 0.05);
    let arms = 0.5 + 0.5 * (2.0 * theta - 14.0 * r).cos();
    let disk = (-r / 0.15).exp() * arms;
    let taper = 1.0 - (r / 0.45).powi(2);
    let value = 5.0 * (bulge + 0.7 * disk * (1.0 - bulge)).min(1.0) * taper;
    // faint halo below 0.05 is cut to sky so the support has no near-zero intensities
    if value < 0.05 {
        0.0
    } else {
        value
    }
}

// Nine vertical ridges of increasing height 0.1..0.5 and one inclined ridge
// of height 0.3 on a 0.05 background.
fn ridges(u: f64, v: f64) -> f64 {
    let width = 0.012;
    let mut vertical: f64 = 0.0;
    for k in 0..9 {
        let c = 0.1 + 0.1 * k as f64;
        let a = 0.1 + 0.05 * k as f64;
        vertical = vertical.max(a * gauss((v - c).powi(2), width));
    }
    // line through (0.05, 0.95) and (0.95, 0.3) in (u, v)
    let (du, dv) = (0.9, -0.65);
    let len = f64::hypot(du, dv);
    let dist = ((u - 0.05) * dv - (v - 0.95) * du).abs() / len;
    let inclined = 0.3 * gauss(dist * dist, width);
    0.05 + vertical + inclined
}

// Four textured quadrants (diagonal stripes, fine vertical stripes, a soft
// checkerboard, a radial gradient) mapped into [0.93, 15.73].
fn barbara(u: f64, v: f64) -> f64 {
    let t = match (u < 0.5, v < 0.5) {
        (true, true) => 0.5 + 0.5 * (TAU * 10.0 * (u + v)).sin(),
        (true, false) => 0.5 + 0.5 * (TAU * 16.0 * v).sin(),
        (false, true) => 0.5 + 0.5 * (TAU * 6.0 * u).sin() * (TAU * 6.0 * v).sin(),
        (false, false) => {
            let r = (u - 0.75).hypot(v - 0.75);
            (1.0 - r / 0.36).clamp(0.0, 1.0)
        }
    };
    0.93 + 14.8 * t
}

// Sinusoidal filaments of Gaussian cross-section over a 0.53 background.
fn cells(u: f64, v: f64) -> f64 {
    const TUBES: [(f64, f64, f64, f64); 6] = [
        (0.15, 0.05, 1.0, 0.0),
        (0.32, 0.08, 1.5, 1.1),
        (0.48, 0.04, 2.0, 2.3),
        (0.63, 0.07, 1.2, 0.7),
        (0.78, 0.06, 2.5, 1.9),
        (0.90, 0.03, 3.0, 0.4),
    ];
    let profile = TUBES
        .iter()
        .map(|&(c, a, freq, phase)| {
            let centre = c + a * (TAU * freq * v + phase).sin();
            gauss((u - centre).powi(2), 0.008)
        })
        .fold(0.0, f64::max);
    0.53 + 16.4 * profile
}

/// Constant intensity `c` everywhere.
pub fn constant_phantom(side: usize, c: f64) -> Result<IntensityImage> {
    IntensityImage::filled(side, c)
}

/// Amplitude and offset of the Hölder phantom for `spec`.
///
/// The phantom is `f(u, v) = c + A·sin(2πu)·sin(2πv)`. Its directional slope
/// in the max-norm is at most `2πA`, and its oscillation at most `2A`, so
/// `|f(x) − f(y)| ≤ (2A)^{1−β}(2πA)^β ‖x − y‖∞^β`. Choosing
/// `A = min(L / (2^{1−β}(2π)^β), Γ/2)` and `c = Γ − A` gives a β-Hölder
/// function with constant `L`, `sup f = Γ` and `f ≥ Γ − 2A ≥ 0`.
pub fn holder_params(spec: &HolderSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    if spec.beta > 1.0 {
        return Err(Error::invalid(format!(
            "Hölder phantom needs β <= 1, got {}",
            spec.beta
        )));
    }
    let b = spec.beta;
    let amp = (spec.lipschitz / (2f64.powf(1.0 - b) * (2.0 * PI).powf(b))).min(spec.gamma / 2.0);
    Ok((amp, spec.gamma - amp))
}

/// The Hölder phantom sampled on an `side × side` grid.
pub fn holder_phantom(side: usize, spec: &HolderSpec) -> Result<IntensityImage> {
    let (amp, base) = holder_params(spec)?;
    let grid = PixelGrid::new(side)?;
    IntensityImage::from_fn(side, |p| {
        let (u, v) = grid.unit_coords(p);
        base + amp * (TAU * u).sin() * (TAU * v).sin()
    })
}
