//! Constants and bandwidths from the oracle risk bound.
//!
//! For an intensity satisfying `|f(x) − f(y)| ≤ L‖x − y‖∞^β` with `sup f = Γ`,
//! the oracle risk is bounded by `g(w*) ≤ 4L²h^{2β} + Γ/(h²n)`. Minimising in
//! the search half-width `h` (unit-square units) gives
//! `h = (Γ/(4βL²))^{1/(2β+2)} · n^{−1/(2β+2)}` and the rate `c₀·n^{−2β/(2β+2)}`.

use crate::error::{Error, Result};
use crate::estimators::WeightMap;
use crate::image::IntensityImage;
use crate::similarity::SimilarityMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderSpec {
    pub beta: f64,
    pub lipschitz: f64,
    pub gamma: f64,
}

impl HolderSpec {
    pub fn new(beta: f64, lipschitz: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            beta,
            lipschitz,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.beta) && ok(self.lipschitz) && ok(self.gamma)) {
            return Err(Error::invalid(format!(
                "Hölder parameters must be positive and finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Exponent of the optimal rate, `−2β/(2β+2)`.
    pub fn theory_slope(&self) -> f64 {
        -2.0 * self.beta / (2.0 * self.beta + 2.0)
    }
}

/// Optimal search half-width in unit-square units for `n` pixels.
pub fn optimal_h(n: usize, spec: &HolderSpec) -> f64 {
    let b = spec.beta;
    let e = 1.0 / (2.0 * b + 2.0);
    (spec.gamma / (4.0 * b * spec.lipschitz * spec.lipschitz)).powf(e) * (n as f64).powf(-e)
}

/// Search half-width on an `side × side` grid, together with its pixel radius `round(N·h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBandwidth {
    pub h: f64,
    pub radius_px: usize,
}

pub fn optimal_search(side: usize, spec: &HolderSpec) -> SearchBandwidth {
    let h = optimal_h(side * side, spec);
    SearchBandwidth {
        h,
        radius_px: (side as f64 * h).round() as usize,
    }
}

/// `c₀ = 2^{(2β+6)/(2β+2)} Γ^{2β/(2β+2)} L^{4/(2β+2)} / β^{2β/(2β+2)}`.
pub fn c0(spec: &HolderSpec) -> f64 {
    let b = spec.beta;
    let d = 2.0 * b + 2.0;
    2f64.powf((2.0 * b + 6.0) / d) * spec.gamma.powf(2.0 * b / d) * spec.lipschitz.powf(4.0 / d)
        / b.powf(2.0 * b / d)
}

/// `c₀ · n^{−2β/(2β+2)}`.
pub fn oracle_rate_bound(n: usize, spec: &HolderSpec) -> f64 {
    c0(spec) * (n as f64).powf(spec.theory_slope())
}

/// Right-hand side `4L²h^{2β} + Γ/(h²n)` of the bias-variance bound.
pub fn bias_variance_bound(h: f64, n: usize, spec: &HolderSpec) -> f64 {
    4.0 * spec.lipschitz.powi(2) * h.powf(2.0 * spec.beta) + spec.gamma / (h * h * n as f64)
}

/// `g(w) = (Σ w(x)·ρ(x))² + Σ w(x)²·f(x)` for a weight map and the oracle similarity.
pub fn oracle_upper_bound(
    weights: &WeightMap,
    similarity: &SimilarityMap,
    f: &IntensityImage,
) -> Result<f64> {
    if weights.offsets != similarity.offsets || weights.center != similarity.center {
        return Err(Error::invalid(
            "weights and similarity cover different windows",
        ));
    }
    let x0 = weights.center;
    f.check_pixel(x0)?;
    let bias: f64 = weights
        .weights
        .iter()
        .zip(&similarity.values)
        .map(|(w, s)| w * s.sqrt())
        .sum();
    let variance: f64 = weights
        .offsets
        .iter()
        .zip(&weights.weights)
        .map(|(&o, w)| w * w * f.at_offset(x0, o))
        .sum();
    Ok(bias * bias + variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::exp_weights;
    use crate::image::{Offset, Pixel, WindowSpec};
    use crate::similarity::oracle_similarity;

    fn spec(beta: f64, l: f64, g: f64) -> HolderSpec {
        HolderSpec::new(beta, l, g).unwrap()
    }

    #[test]
    fn optimal_h_example() {
        let s = spec(1.0, 1.0, 4.0);
        assert!((optimal_h(65536, &s) - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(optimal_search(256, &s).radius_px, 16);
    }

    #[test]
    fn c0_examples() {
        assert!((c0(&spec(1.0, 1.0, 4.0)) - 8.0).abs() < 1e-12);
        assert!((c0(&spec(1.0, 1.0, 1.0)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_holder_rejected() {
        assert!(HolderSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(HolderSpec::new(1.0, -1.0, 1.0).is_err());
        assert!(HolderSpec::new(1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn h_minimises_the_bound() {
        for &(b, l, g) in &[(1.0, 1.0, 4.0), (0.5, 2.0, 1.0), (2.0, 0.3, 10.0)] {
            let s = spec(b, l, g);
            let n = 10_000;
            let h = optimal_h(n, &s);
            let at = bias_variance_bound(h, n, &s);
            assert!(at <= bias_variance_bound(h * 1.01, n, &s));
            assert!(at <= bias_variance_bound(h * 0.99, n, &s));
        }
    }

    #[test]
    fn plugged_bound_equals_c0_rate_for_lipschitz() {
        for &l in &[0.25, 1.0, 3.0] {
            for &g in &[0.5, 4.0, 100.0] {
                for &n in &[4096usize, 65536, 1 << 20] {
                    let s = spec(1.0, l, g);
                    let lhs = bias_variance_bound(optimal_h(n, &s), n, &s);
                    let rhs = oracle_rate_bound(n, &s);
                    assert!(((lhs - rhs) / rhs).abs() < 1e-9, "L={l} Γ={g} n={n}");
                }
            }
        }
    }

    #[test]
    fn plugged_bound_general_beta() {
        // the minimised bound is (1+β)/2 · c₀ n^{−2β/(2β+2)}; c₀ matches it at β = 1 only
        for &b in &[0.25, 0.5, 0.8, 1.0, 1.5, 2.0] {
            for &(l, g) in &[(1.0, 4.0), (0.5, 2.0), (3.0, 0.7)] {
                let s = spec(b, l, g);
                let n = 50_000;
                let lhs = bias_variance_bound(optimal_h(n, &s), n, &s);
                let rhs = (1.0 + b) / 2.0 * oracle_rate_bound(n, &s);
                assert!(((lhs - rhs) / rhs).abs() < 1e-9, "β={b}");
                if b <= 1.0 {
                    assert!(lhs <= oracle_rate_bound(n, &s) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn upper_bound_examples() {
        let f = IntensityImage::filled(9, 3.0).unwrap();
        let x0 = Pixel::new(4, 4);
        let spec = WindowSpec::new(1, 0);
        let sim = oracle_similarity(&f, x0, spec).unwrap();
        let w = exp_weights(&sim, 1.0).unwrap();
        let g = oracle_upper_bound(&w, &sim, &f).unwrap();
        assert!((g - 3.0 / 9.0).abs() < 1e-14);

        let single = oracle_similarity(&f, x0, WindowSpec::new(0, 0)).unwrap();
        let w = exp_weights(&single, 1.0).unwrap();
        assert_eq!(oracle_upper_bound(&w, &single, &f).unwrap(), 3.0);
    }

    #[test]
    fn upper_bound_hand_case() {
        let f = IntensityImage::new(3, vec![0.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        let x0 = Pixel::new(1, 1);
        let sim = oracle_similarity(&f, x0, WindowSpec::new(1, 0)).unwrap();
        let w = exp_weights(&sim, 1.0).unwrap();
        // corners have ρ = 1 and weight e⁻¹/Z, the rest ρ = 0 and weight 1/Z
        let e = (-1.0f64).exp();
        let z = 4.0 * e + 5.0;
        let bias = 4.0 * e / z;
        let fvals = [0.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.0];
        let raw = [e, 1.0, e, 1.0, 1.0, 1.0, e, 1.0, e];
        let var: f64 = raw
            .iter()
            .zip(fvals)
            .map(|(r, f)| (r / z).powi(2) * f)
            .sum();
        let g = oracle_upper_bound(&w, &sim, &f).unwrap();
        assert!((g - (bias * bias + var)).abs() < 1e-14);

        let mut other = sim.clone();
        other.offsets[0] = Offset::new(5, 5);
        assert!(oracle_upper_bound(&w, &other, &f).is_err());
    }
}
