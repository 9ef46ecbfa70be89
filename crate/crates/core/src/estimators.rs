//! Point estimators at a single pixel.
//!
//! These are direct evaluations of the weighted-mean definitions and serve as
//! the reference the whole-image filter in [`crate::pipeline`] is checked
//! against.

use crate::error::{Error, Result};
use crate::image::{CountImage, IntensityImage, Offset, Pixel, PixelSplit, WindowSpec};
use crate::kernels::PatchKernel;
use crate::similarity::{
    estimated_similarity, local_mean, oracle_similarity, patch_distance,
    split_estimated_similarity, split_local_mean, SimilarityMap,
};

/// Default lower bound `γ` on the bandwidth `H`.
pub const DEFAULT_BANDWIDTH_FLOOR: f64 = 1e-3;

/// Normalised nonnegative weights over (part of) a search window.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub center: Pixel,
    pub offsets: Vec<Offset>,
    pub weights: Vec<f64>,
}

impl WeightMap {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w(x)·Y(x)`, accumulated around `Y(x₀)` and clamped to the range of
    /// the averaged counts, so constant windows are reproduced exactly.
    pub fn apply(&self, y: &CountImage) -> f64 {
        let base = y.get(self.center) as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for (&o, &w) in self.offsets.iter().zip(&self.weights) {
            let v = y.at_offset(self.center, o) as f64;
            acc += w * (v - base);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (base + acc).clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthMode {
    /// `H(x₀) = H` everywhere.
    Constant(f64),
    /// `H²(x₀) = μ·√f̄(x₀)`.
    Adaptive(f64),
}

/// Control function `H(x₀)` with floor `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthFunction {
    pub mode: BandwidthMode,
    pub floor: f64,
}

impl BandwidthFunction {
    pub fn constant(h: f64) -> Self {
        Self {
            mode: BandwidthMode::Constant(h),
            floor: DEFAULT_BANDWIDTH_FLOOR,
        }
    }

    pub fn adaptive(mu: f64) -> Self {
        Self {
            mode: BandwidthMode::Adaptive(mu),
            floor: DEFAULT_BANDWIDTH_FLOOR,
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let param = match self.mode {
            BandwidthMode::Constant(h) => h,
            BandwidthMode::Adaptive(mu) => mu,
        };
        if !(param > 0.0) || !(self.floor > 0.0) {
            return Err(Error::invalid(format!(
                "bandwidth parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `H²(x₀)` given the local mean, never below `γ²`.
    pub fn h_squared(&self, fbar: f64) -> f64 {
        let h2 = match self.mode {
            BandwidthMode::Constant(h) => h * h,
            BandwidthMode::Adaptive(mu) => mu * fbar.max(0.0).sqrt(),
        };
        h2.max(self.floor * self.floor)
    }
}

/// `w(x) = exp(−s(x)/H²) / Σ exp(−s(x′)/H²)`.
pub fn exp_weights(similarity: &SimilarityMap, h2: f64) -> Result<WeightMap> {
    if !(h2 > 0.0) {
        return Err(Error::invalid(format!("H² must be positive, got {h2}")));
    }
    if similarity.is_empty() {
        return Err(Error::invalid("empty similarity map"));
    }
    // shift by the smallest similarity so the largest term is exp(0)
    let floor = similarity
        .values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = similarity
        .values
        .iter()
        .map(|&s| (-(s - floor) / h2).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(WeightMap {
        center: similarity.center,
        offsets: similarity.offsets.clone(),
        weights: raw.into_iter().map(|w| w / total).collect(),
    })
}

/// Oracle estimate: weights from the clean image, average of the counts.
pub fn oracle_estimate(
    f: &IntensityImage,
    y: &CountImage,
    x0: Pixel,
    spec: WindowSpec,
    bandwidth: &BandwidthFunction,
) -> Result<f64> {
    f.ensure_same_grid(y)?;
    bandwidth.validate()?;
    let sim = oracle_similarity(f, x0, spec)?;
    let fbar = match bandwidth.mode {
        BandwidthMode::Constant(_) => 0.0,
        BandwidthMode::Adaptive(_) => local_mean(y, x0, spec.search_radius)?,
    };
    Ok(exp_weights(&sim, bandwidth.h_squared(fbar))?.apply(y))
}

/// Adaptive estimate with the local mean computed from the counts.
pub fn adaptive_estimate(
    y: &CountImage,
    x0: Pixel,
    spec: WindowSpec,
    kernel: &PatchKernel,
    bandwidth: &BandwidthFunction,
) -> Result<f64> {
    let fbar = local_mean(y, x0, spec.search_radius)?;
    adaptive_estimate_with_mean(y, x0, spec, kernel, bandwidth, fbar)
}

/// Adaptive estimate with an injected bias term `f̄` (the bandwidth also sees it).
pub fn adaptive_estimate_with_mean(
    y: &CountImage,
    x0: Pixel,
    spec: WindowSpec,
    kernel: &PatchKernel,
    bandwidth: &BandwidthFunction,
    fbar: f64,
) -> Result<f64> {
    bandwidth.validate()?;
    let sim = estimated_similarity(y, x0, spec, kernel, fbar)?;
    Ok(exp_weights(&sim, bandwidth.h_squared(fbar))?.apply(y))
}

/// Split-sample estimate: similarity from odd offsets, average over even ones.
pub fn split_adaptive_estimate(
    y: &CountImage,
    split: &PixelSplit,
    spec: WindowSpec,
    bandwidth: &BandwidthFunction,
) -> Result<f64> {
    bandwidth.validate()?;
    let sim = split_estimated_similarity(y, split, spec)?;
    let fbar = split_local_mean(y, split, spec.search_radius)?;
    Ok(exp_weights(&sim, bandwidth.h_squared(fbar))?.apply(y))
}

/// Classic NLM: weights `exp(−d²/H²)` from the raw patch distance.
pub fn classic_nlm(
    y: &CountImage,
    x0: Pixel,
    spec: WindowSpec,
    kernel: &PatchKernel,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("H must be positive, got {h}")));
    }
    y.check_pixel(x0)?;
    if kernel.radius() != spec.patch_radius {
        return Err(Error::invalid("kernel radius does not match patch radius"));
    }
    let offsets: Vec<Offset> = crate::image::window_offsets(spec.search_radius).collect();
    let values = offsets
        .iter()
        .map(|&o| patch_distance(y, x0, o, kernel))
        .collect();
    let sim = SimilarityMap {
        center: x0,
        offsets,
        values,
    };
    Ok(exp_weights(&sim, h * h)?.apply(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{checkerboard_split, window_offsets};
    use crate::kernels::{kernel_weights, KernelChoice};
    use crate::poisson::{sample_poisson, NoiseSeed};
    use proptest::prelude::*;

    fn map(values: Vec<f64>) -> SimilarityMap {
        SimilarityMap {
            center: Pixel::new(0, 0),
            offsets: (0..values.len() as isize)
                .map(|i| Offset::new(0, i))
                .collect(),
            values,
        }
    }

    #[test]
    fn zero_similarity_gives_uniform_weights() {
        let w = exp_weights(&map(vec![0.0; 9]), 2.0).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn two_point_weights() {
        let h2 = 1.7;
        let w = exp_weights(&map(vec![0.0, h2 * 2f64.ln()]), h2).unwrap();
        assert!((w.weights[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((w.weights[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_bandwidth_rejected() {
        assert!(exp_weights(&map(vec![0.0]), 0.0).is_err());
        assert!(exp_weights(&map(vec![0.0]), -1.0).is_err());
    }

    #[test]
    fn oracle_constant_cases() {
        let f = IntensityImage::filled(7, 3.0).unwrap();
        let y = CountImage::filled(7, 3).unwrap();
        let spec = WindowSpec::new(2, 0);
        let bw = BandwidthFunction::constant(1.0);
        assert_eq!(
            oracle_estimate(&f, &y, Pixel::new(3, 3), spec, &bw).unwrap(),
            3.0
        );

        let y = CountImage::from_fn(7, |p| ((p.row * 5 + p.col * 3) % 7) as u32).unwrap();
        let x0 = Pixel::new(3, 3);
        let mean = local_mean(&y, x0, 2).unwrap();
        let got = oracle_estimate(&f, &y, x0, spec, &bw).unwrap();
        assert!((got - mean).abs() < 1e-12);
    }

    #[test]
    fn oracle_hand_case() {
        // rows 0,1,2 of f; H = 1
        let f = IntensityImage::new(3, vec![0.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.0]).unwrap();
        let y = CountImage::new(3, vec![1, 0, 3, 2, 1, 1, 4, 0, 2]).unwrap();
        let x0 = Pixel::new(1, 1);
        // f(x0) = 1: |f−1|² = [1,0,1,0,0,0,1,0,1], weights ∝ e^{-1} or 1
        let e = (-1.0f64).exp();
        let raw = [e, 1.0, e, 1.0, 1.0, 1.0, e, 1.0, e];
        let ys = [1.0, 0.0, 3.0, 2.0, 1.0, 1.0, 4.0, 0.0, 2.0];
        let want: f64 =
            raw.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>() / raw.iter().sum::<f64>();
        let got = oracle_estimate(
            &f,
            &y,
            x0,
            WindowSpec::new(1, 0),
            &BandwidthFunction::constant(1.0),
        )
        .unwrap();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn adaptive_degenerate_and_constant() {
        let k = kernel_weights(KernelChoice::K0, 1).unwrap();
        let y = CountImage::filled(6, 9).unwrap();
        let bw = BandwidthFunction::adaptive(1.0);
        assert_eq!(
            adaptive_estimate(&y, Pixel::new(0, 5), WindowSpec::new(2, 1), &k, &bw).unwrap(),
            9.0
        );

        let y = CountImage::from_fn(6, |p| (p.row * p.col) as u32).unwrap();
        let x0 = Pixel::new(4, 3);
        assert_eq!(
            adaptive_estimate(&y, x0, WindowSpec::new(0, 1), &k, &bw).unwrap(),
            12.0
        );
    }

    #[test]
    fn adaptive_noisy_constant() {
        let f = IntensityImage::filled(48, 4.0).unwrap();
        let spec = WindowSpec::new(5, 2);
        let k = kernel_weights(KernelChoice::K0, 2).unwrap();
        let bw = BandwidthFunction::adaptive(1.0);
        let bound = 5.0 * (4.0 / spec.search_size() as f64).sqrt();
        let mut within = 0;
        let total = 40;
        for s in 0..total {
            let y = sample_poisson(&f, NoiseSeed(s));
            let est = adaptive_estimate(&y, Pixel::new(24, 24), spec, &k, &bw).unwrap();
            if (est - 4.0).abs() <= bound {
                within += 1;
            }
        }
        assert!(within >= total - 2, "{within}/{total}");
    }

    #[test]
    fn split_estimate_cases() {
        let y = CountImage::filled(7, 6).unwrap();
        let split = checkerboard_split(y.grid(), Pixel::new(3, 3)).unwrap();
        let bw = BandwidthFunction::constant(2.0);
        assert_eq!(
            split_adaptive_estimate(&y, &split, WindowSpec::new(2, 1), &bw).unwrap(),
            6.0
        );

        // odd offsets carry huge counts that must not enter the average
        let y =
            CountImage::from_fn(7, |p| if (p.row + p.col) % 2 == 0 { 1 } else { 1000 }).unwrap();
        let est = split_adaptive_estimate(&y, &split, WindowSpec::new(2, 1), &bw).unwrap();
        assert!((est - 1.0).abs() < 1e-12);

        assert!(split_adaptive_estimate(&y, &split, WindowSpec::new(0, 1), &bw).is_err());
    }

    #[test]
    fn split_matches_brute_force() {
        let y = CountImage::from_fn(5, |p| ((p.row * 7 + p.col * 3 + p.row * p.col) % 9) as u32)
            .unwrap();
        let x0 = Pixel::new(2, 1);
        let split = checkerboard_split(y.grid(), x0).unwrap();
        let h = 2.5;
        let read = |o: Offset| y.at_offset(x0, o) as f64;
        let odd_search: Vec<Offset> = window_offsets(2).filter(|o| !o.is_even()).collect();
        let fbar = odd_search.iter().map(|&o| read(o)).sum::<f64>() / odd_search.len() as f64;
        let odd_patch: Vec<Offset> = window_offsets(1).filter(|o| !o.is_even()).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for o in window_offsets(2).filter(|o| o.is_even()) {
            let d = odd_patch
                .iter()
                .map(|q| (read(*q) - read(Offset::new(q.dr + o.dr, q.dc + o.dc))).powi(2))
                .sum::<f64>()
                / odd_patch.len() as f64;
            let w = (-(d - 2.0 * fbar).max(0.0) / (h * h)).exp();
            num += w * read(o);
            den += w;
        }
        let got = split_adaptive_estimate(
            &y,
            &split,
            WindowSpec::new(2, 1),
            &BandwidthFunction::constant(h),
        )
        .unwrap();
        assert!((got - num / den).abs() < 1e-12);
    }

    #[test]
    fn classic_matches_zero_mean_adaptive() {
        let y = CountImage::from_fn(6, |p| ((p.row * 4 + p.col * 7) % 10) as u32).unwrap();
        let spec = WindowSpec::new(2, 1);
        let k = kernel_weights(KernelChoice::Gaussian { width: 1.0 }, 1).unwrap();
        for x0 in y.grid().pixels() {
            let classic = classic_nlm(&y, x0, spec, &k, 3.0).unwrap();
            let adaptive = adaptive_estimate_with_mean(
                &y,
                x0,
                spec,
                &k,
                &BandwidthFunction::constant(3.0),
                0.0,
            )
            .unwrap();
            assert_eq!(classic, adaptive);
        }
        let c = CountImage::filled(6, 2).unwrap();
        assert_eq!(
            classic_nlm(&c, Pixel::new(1, 1), spec, &k, 1.0).unwrap(),
            2.0
        );
    }

    #[test]
    fn classic_matches_brute_force() {
        let y = CountImage::from_fn(5, |p| ((p.row * 3 + p.col * 5) % 7) as u32).unwrap();
        let x0 = Pixel::new(4, 0);
        let h = 4.0;
        let read = |o: Offset| y.at_offset(x0, o) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for o in window_offsets(1) {
            let mut d = 0.0;
            for q in window_offsets(1) {
                d += (read(q) - read(Offset::new(q.dr + o.dr, q.dc + o.dc))).powi(2) / 9.0;
            }
            let w = (-d / (h * h)).exp();
            num += w * read(o);
            den += w;
        }
        let k = kernel_weights(KernelChoice::Rectangular, 1).unwrap();
        let got = classic_nlm(&y, x0, WindowSpec::new(1, 1), &k, h).unwrap();
        assert!((got - num / den).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_floor_applies() {
        let bw = BandwidthFunction::adaptive(1.0).with_floor(1e-3);
        assert_eq!(bw.h_squared(0.0), 1e-6);
        assert_eq!(bw.h_squared(16.0), 4.0);
        assert_eq!(BandwidthFunction::constant(3.0).h_squared(100.0), 9.0);
    }

    proptest! {
        #[test]
        fn weights_normalised_and_convex(
            data in proptest::collection::vec(0u32..50, 49),
            r in 0usize..7, c in 0usize..7,
            mu in 0.05f64..5.0,
        ) {
            let y = CountImage::new(7, data).unwrap();
            let x0 = Pixel::new(r, c);
            let spec = WindowSpec::new(2, 1);
            let k = kernel_weights(KernelChoice::K0, 1).unwrap();
            let fbar = local_mean(&y, x0, 2).unwrap();
            let bw = BandwidthFunction::adaptive(mu);
            let sim = estimated_similarity(&y, x0, spec, &k, fbar).unwrap();
            let w = exp_weights(&sim, bw.h_squared(fbar)).unwrap();
            prop_assert!((w.sum() - 1.0).abs() < 1e-12);
            prop_assert!(w.weights.iter().all(|&x| x >= 0.0));

            let vals: Vec<f64> = window_offsets(2).map(|o| y.at_offset(x0, o) as f64).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let est = adaptive_estimate(&y, x0, spec, &k, &bw).unwrap();
            prop_assert!(est >= lo - 1e-9 && est <= hi + 1e-9);
        }
    }
}
