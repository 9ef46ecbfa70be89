//! Image quality metrics.

use crate::error::{Error, Result};
use crate::image::{Image, IntensityImage, PixelValue};

/// Mean squared error between two images on the same grid.
pub fn mse<A: PixelValue, B: PixelValue>(a: &Image<A>, b: &Image<B>) -> Result<f64> {
    a.ensure_same_grid(b)?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Normalised mean integrated squared error: mean of `(f̂ − f)²/f` over pixels with `f > 0`.
pub fn nmise<A: PixelValue>(fhat: &Image<A>, f: &IntensityImage) -> Result<f64> {
    fhat.ensure_same_grid(f)?;
    let (sum, count) = fhat
        .as_slice()
        .iter()
        .zip(f.as_slice())
        .filter(|(_, &t)| t > 0.0)
        .fold((0.0, 0usize), |(s, c), (&e, &t)| {
            let d = e.to_f64() - t;
            (s + d * d / t, c + 1)
        });
    if count == 0 {
        return Err(Error::invalid(
            "NMISE needs at least one pixel with positive intensity",
        ));
    }
    Ok(sum / count as f64)
}

/// Peak signal-to-noise ratio in dB with peak `max f`; `+∞` for a perfect match.
pub fn psnr<A: PixelValue>(fhat: &Image<A>, f: &IntensityImage) -> Result<f64> {
    let err = mse(fhat, f)?;
    Ok(psnr_from_mse(f.peak(), err))
}

pub fn psnr_from_mse(peak: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub nmise: f64,
    pub psnr: f64,
    pub mse: f64,
    pub runtime_ms: u64,
}

impl MetricsReport {
    pub fn evaluate<A: PixelValue>(
        estimate: &Image<A>,
        clean: &IntensityImage,
        runtime_ms: u64,
    ) -> Result<Self> {
        Ok(Self {
            nmise: nmise(estimate, clean)?,
            psnr: psnr(estimate, clean)?,
            mse: mse(estimate, clean)?,
            runtime_ms,
        })
    }

    pub const CSV_HEADER: &'static str = "nmise,psnr,mse,runtime_ms";

    /// One CSV row; a perfect reconstruction prints `inf` for PSNR.
    pub fn csv_row(&self) -> String {
        let psnr = if self.psnr.is_infinite() {
            "inf".to_string()
        } else {
            self.psnr.to_string()
        };
        format!("{},{},{},{}", self.nmise, psnr, self.mse, self.runtime_ms)
    }
}
