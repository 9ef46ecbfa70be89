//! Patch weighting kernels for the smoothed similarity distance.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{window_offsets, Offset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    /// `exp(−‖o‖₂² / (2·width))` with `‖o‖₂²` the squared pixel distance.
    Gaussian {
        width: f64,
    },
    /// Nested-box kernel, constant on L∞ shells.
    K0,
    Rectangular,
}

impl KernelChoice {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelChoice::Gaussian { width } if !(width > 0.0) => Err(Error::invalid(format!(
                "gaussian kernel width must be positive, got {width}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelChoice::Gaussian { width } => write!(f, "gaussian:{width}"),
            KernelChoice::K0 => f.write_str("k0"),
            KernelChoice::Rectangular => f.write_str("rect"),
        }
    }
}

impl FromStr for KernelChoice {
    type Err = Error;

    /// Accepts `k0`, `rect`/`rectangular`, and `gaussian:<width>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let choice = match s {
            "k0" => KernelChoice::K0,
            "rect" | "rectangular" => KernelChoice::Rectangular,
            _ => match s.strip_prefix("gaussian:") {
                Some(w) => KernelChoice::Gaussian {
                    width: w
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad gaussian width '{w}'")))?,
                },
                None => return Err(Error::invalid(format!("unknown kernel '{s}'"))),
            },
        };
        choice.validate()?;
        Ok(choice)
    }
}

/// Unnormalised kernel values over the patch offsets `‖o‖∞ ≤ radius`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchKernel {
    choice: KernelChoice,
    radius: usize,
    weights: Vec<f64>,
    total: f64,
}

impl PatchKernel {
    pub fn choice(&self) -> KernelChoice {
        self.choice
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ κ(o)` over the patch.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn weight(&self, o: Offset) -> f64 {
        let side = 2 * self.radius + 1;
        let r = (o.dr + self.radius as isize) as usize;
        let c = (o.dc + self.radius as isize) as usize;
        self.weights[r * side + c]
    }

    /// Offsets paired with their weights.
    pub fn iter(&self) -> impl Iterator<Item = (Offset, f64)> + '_ {
        window_offsets(self.radius).zip(self.weights.iter().copied())
    }
}

/// κ₀ value on the shell `j = ‖o‖∞`: `Σ_{k=max(1,j)}^{radius} 1/(2k+1)²`.
///
/// With `radius = 0` the sum is empty; the single centre sample then gets
/// weight 1 so that a one-pixel patch stays usable.
pub fn k0_shell_weight(j: usize, radius: usize) -> f64 {
    if radius == 0 {
        return 1.0;
    }
    (j.max(1)..=radius)
        .map(|k| 1.0 / ((2 * k + 1) * (2 * k + 1)) as f64)
        .sum()
}

pub fn kernel_weights(choice: KernelChoice, patch_radius: usize) -> Result<PatchKernel> {
    choice.validate()?;
    let m = (2 * patch_radius + 1).pow(2);
    let weights: Vec<f64> = window_offsets(patch_radius)
        .map(|o| match choice {
            KernelChoice::Gaussian { width } => (-o.norm2_sq() / (2.0 * width)).exp(),
            KernelChoice::K0 => k0_shell_weight(o.linf(), patch_radius),
            KernelChoice::Rectangular => 1.0 / m as f64,
        })
        .collect();
    let total = weights.iter().sum();
    Ok(PatchKernel {
        choice,
        radius: patch_radius,
        weights,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn k0_radius_one_is_flat() {
        let k = kernel_weights(KernelChoice::K0, 1).unwrap();
        assert!(k.weights().iter().all(|&w| (w - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn k0_radius_two_shells() {
        let k = kernel_weights(KernelChoice::K0, 2).unwrap();
        let inner = 34.0 / 225.0;
        let outer = 1.0 / 25.0;
        for (o, w) in k.iter() {
            let expected = if o.linf() <= 1 { inner } else { outer };
            assert!((w - expected).abs() < 1e-15, "{o:?}: {w}");
        }
    }

    #[test]
    fn rectangular_is_one_over_m() {
        let k = kernel_weights(KernelChoice::Rectangular, 1).unwrap();
        assert!(k.weights().iter().all(|&w| w == 1.0 / 9.0));
    }

    #[test]
    fn gaussian_infinite_width_is_flat() {
        let k = kernel_weights(
            KernelChoice::Gaussian {
                width: f64::INFINITY,
            },
            3,
        )
        .unwrap();
        assert!(k.weights().iter().all(|&w| w == 1.0));
        let k = kernel_weights(KernelChoice::Gaussian { width: 1e12 }, 3).unwrap();
        assert!(k.weights().iter().all(|&w| (w - 1.0).abs() < 1e-10));
    }

    #[test]
    fn gaussian_uses_pixel_distance() {
        let k = kernel_weights(KernelChoice::Gaussian { width: 2.0 }, 2).unwrap();
        assert_eq!(k.weight(Offset::new(0, 0)), 1.0);
        assert!((k.weight(Offset::new(1, 1)) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k.weight(Offset::new(-2, 1)) - (-1.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_width_must_be_positive() {
        assert!(kernel_weights(KernelChoice::Gaussian { width: 0.0 }, 1).is_err());
        assert!(kernel_weights(KernelChoice::Gaussian { width: -1.0 }, 1).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in ["k0", "rect", "gaussian:2.5"] {
            assert_eq!(s.parse::<KernelChoice>().unwrap().to_string(), s);
        }
        assert!("box".parse::<KernelChoice>().is_err());
        assert!("gaussian:x".parse::<KernelChoice>().is_err());
    }

    proptest! {
        #[test]
        fn k0_nonincreasing_and_shell_total(radius in 1usize..12) {
            let k = kernel_weights(KernelChoice::K0, radius).unwrap();
            prop_assert!(k.weights().iter().all(|&w| w >= 0.0));
            for j in 1..=radius {
                prop_assert!(k0_shell_weight(j, radius) <= k0_shell_weight(j - 1, radius));
            }
            // shell j has 8j offsets (1 at j = 0); total collapses to `radius`
            let by_shells: f64 = (0..=radius)
                .map(|j| if j == 0 { 1.0 } else { 8.0 * j as f64 } * k0_shell_weight(j, radius))
                .sum();
            prop_assert!((by_shells - k.total()).abs() < 1e-12);
            prop_assert!((k.total() - radius as f64).abs() < 1e-12);
        }
    }
}
