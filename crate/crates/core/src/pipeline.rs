//! The two-step Poisson NLM filter on whole images.
//!
//! Step 1 is the bias-corrected NLM average with `H²(x₀) = μ·√f̄(x₀)`.
//! Step 2 re-smooths the step-1 output with a small Gaussian, but only where
//! the local step-1 mean is below `δ` (dark regions).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::engine::{self, FilterPlan, PatchReduce};
use crate::error::{Error, Result};
use crate::estimators::{oracle_estimate, BandwidthFunction};
use crate::image::{
    checkerboard_split, window_offsets, CountImage, Image, IntensityImage, Pixel, WindowSpec,
};
use crate::kernels::{kernel_weights, KernelChoice};
use crate::similarity::{local_mean, split_local_mean};

/// Step-2 threshold on the local step-1 mean.
pub const DEFAULT_DELTA: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Split,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Plain => "plain",
            Variant::Split => "split",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plain" => Ok(Variant::Plain),
            "split" => Ok(Variant::Split),
            other => Err(Error::invalid(format!("unknown variant '{other}'"))),
        }
    }
}

/// Tunables of the two-step filter. Window sizes are full widths (19 means 19×19).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub search_width: usize,
    pub patch_width: usize,
    /// Step-2 window radius in pixels.
    pub d: usize,
    pub delta: f64,
    pub mu: f64,
    /// Step-2 Gaussian width (σ_H in figure captions).
    pub h_g: f64,
    /// Patch kernel for step 1.
    pub kernel: KernelChoice,
    pub variant: Variant,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            search_width: 15,
            patch_width: 7,
            d: 2,
            delta: DEFAULT_DELTA,
            mu: 1.0,
            h_g: 1.0,
            kernel: KernelChoice::K0,
            variant: Variant::Plain,
        }
    }
}

impl FilterConfig {
    fn preset(search_width: usize, patch_width: usize, d: usize, mu: f64, h_g: f64) -> Self {
        Self {
            search_width,
            patch_width,
            d,
            mu,
            h_g,
            ..Self::default()
        }
    }

    /// Spots: 19×19 / 13×13, d = 3, μ = 1, σ_H = 2.5.
    pub fn spots() -> Self {
        Self::preset(19, 13, 3, 1.0, 2.5)
    }

    /// Galaxy: 13×13 / 3×3, d = 2, μ = 0.6, σ_H = 1.
    pub fn galaxy() -> Self {
        Self::preset(13, 3, 2, 0.6, 1.0)
    }

    /// Ridges: 9×9 / 21×21, d = 4, μ = 0.4, σ_H = 0.5.
    pub fn ridges() -> Self {
        Self::preset(9, 21, 4, 0.4, 0.5)
    }

    /// Barbara: 15×15 / 21×21, d = 0, μ = 1 (no step-2 width given; d = 0 makes it moot).
    pub fn barbara() -> Self {
        Self::preset(15, 21, 0, 1.0, 1.0)
    }

    /// Cells: 7×7 / 13×13, d = 2, μ = 1, σ_H = 2.
    pub fn cells() -> Self {
        Self::preset(7, 13, 2, 1.0, 2.0)
    }

    pub fn preset_by_name(name: &str) -> Option<Self> {
        match name {
            "spots" => Some(Self::spots()),
            "galaxy" => Some(Self::galaxy()),
            "ridges" => Some(Self::ridges()),
            "barbara" => Some(Self::barbara()),
            "cells" => Some(Self::cells()),
            _ => None,
        }
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec::new(self.search_width / 2, self.patch_width / 2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("search", self.search_width), ("patch", self.patch_width)] {
            if w == 0 || w % 2 == 0 {
                return Err(Error::invalid(format!(
                    "{name} width must be odd and >= 1, got {w}"
                )));
            }
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::invalid(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.h_g > 0.0) {
            return Err(Error::invalid(format!(
                "h_g must be positive, got {}",
                self.h_g
            )));
        }
        self.kernel.validate()?;
        if self.variant == Variant::Split && (self.search_width < 3 || self.patch_width < 3) {
            return Err(Error::invalid(
                "split variant needs search and patch widths of at least 3",
            ));
        }
        Ok(())
    }
}

/// Step 1: bias-corrected NLM with adaptive bandwidth, every pixel.
pub fn nlmpf_step1(y: &CountImage, cfg: &FilterConfig) -> Result<IntensityImage> {
    cfg.validate()?;
    let spec = cfg.window_spec();
    let bandwidth = BandwidthFunction::adaptive(cfg.mu);
    let grid = y.grid();
    let pixels: Vec<Pixel> = grid.pixels().collect();

    let (reduce, even_only, fbar): (PatchReduce, bool, Vec<f64>) = match cfg.variant {
        Variant::Plain => {
            let kernel = kernel_weights(cfg.kernel, spec.patch_radius)?;
            let fbar = pixels
                .par_iter()
                .map(|&p| local_mean(y, p, spec.search_radius))
                .collect::<Result<_>>()?;
            (PatchReduce::for_kernel(&kernel), false, fbar)
        }
        Variant::Split => {
            let fbar = pixels
                .par_iter()
                .map(|&p| split_local_mean(y, &checkerboard_split(grid, p)?, spec.search_radius))
                .collect::<Result<_>>()?;
            (PatchReduce::odd_parity(spec.patch_radius), true, fbar)
        }
    };
    let h2 = fbar.iter().map(|&m| bandwidth.h_squared(m)).collect();
    let bias = fbar.iter().map(|&m| 2.0 * m).collect();
    let plan = FilterPlan {
        search_radius: spec.search_radius,
        patch_radius: spec.patch_radius,
        reduce,
        even_offsets_only: even_only,
        bias: Some(bias),
        h2,
    };
    Image::new(y.side(), engine::run(y, &plan))
}

/// Step 2: conditional Gaussian re-smoothing of a step-1 estimate.
pub fn nlmpf_step2(f1: &IntensityImage, cfg: &FilterConfig) -> IntensityImage {
    let d = cfg.d;
    let taps: Vec<(crate::image::Offset, f64)> = window_offsets(d)
        .map(|o| (o, (-o.norm2_sq() / (2.0 * cfg.h_g)).exp()))
        .collect();
    let count = taps.len() as f64;
    let pixels: Vec<Pixel> = f1.grid().pixels().collect();
    let out: Vec<f64> = pixels
        .par_iter()
        .map(|&p| {
            let center = f1.get(p);
            let mean = taps.iter().map(|&(o, _)| f1.at_offset(p, o)).sum::<f64>() / count;
            if mean >= cfg.delta {
                return center;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &(o, g) in &taps {
                let v = f1.at_offset(p, o);
                num += g * (v - center);
                den += g;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (center + num / den).clamp(lo, hi)
        })
        .collect();
    Image::new(f1.side(), out).expect("convex averages of valid intensities")
}

/// Full filter: step 2 applied to step 1.
pub fn denoise(y: &CountImage, cfg: &FilterConfig) -> Result<IntensityImage> {
    let f1 = nlmpf_step1(y, cfg)?;
    Ok(nlmpf_step2(&f1, cfg))
}

/// Classic NLM baseline (no bias correction, constant `H`).
pub fn classic_nlm_image(
    y: &CountImage,
    spec: WindowSpec,
    kernel: KernelChoice,
    h: f64,
) -> Result<IntensityImage> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("H must be positive, got {h}")));
    }
    let kernel = kernel_weights(kernel, spec.patch_radius)?;
    let plan = FilterPlan {
        search_radius: spec.search_radius,
        patch_radius: spec.patch_radius,
        reduce: PatchReduce::for_kernel(&kernel),
        even_offsets_only: false,
        bias: None,
        h2: vec![h * h; y.len()],
    };
    Image::new(y.side(), engine::run(y, &plan))
}

/// Oracle estimate at every pixel (needs the clean image).
pub fn oracle_image(
    f: &IntensityImage,
    y: &CountImage,
    spec: WindowSpec,
    bandwidth: &BandwidthFunction,
) -> Result<IntensityImage> {
    f.ensure_same_grid(y)?;
    let pixels: Vec<Pixel> = f.grid().pixels().collect();
    let values = pixels
        .par_iter()
        .map(|&p| oracle_estimate(f, y, p, spec, bandwidth))
        .collect::<Result<Vec<f64>>>()?;
    Image::new(f.side(), values)
}
