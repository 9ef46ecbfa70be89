//! Similarity maps over a search window.
//!
//! All maps hold squared similarities. The oracle map uses the clean image;
//! the estimated maps use patch distances between noisy counts corrected by
//! the Poisson bias term `2·f̄`, which is the expected squared difference of
//! two independent counts with equal mean.

use crate::error::{Error, Result};
use crate::image::{
    window_offsets, CountImage, IntensityImage, Offset, Pixel, PixelSplit, WindowSpec,
};
use crate::kernels::PatchKernel;

/// Squared similarity per search-window offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub center: Pixel,
    pub offsets: Vec<Offset>,
    pub values: Vec<f64>,
}

impl SimilarityMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, o: Offset) -> Option<f64> {
        self.offsets
            .iter()
            .position(|&q| q == o)
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Offset, f64)> + '_ {
        self.offsets
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

/// `|f(x) − f(x₀)|²` over the search window.
pub fn oracle_similarity(f: &IntensityImage, x0: Pixel, spec: WindowSpec) -> Result<SimilarityMap> {
    f.check_pixel(x0)?;
    let f0 = f.get(x0);
    let offsets: Vec<Offset> = window_offsets(spec.search_radius).collect();
    let values = offsets
        .iter()
        .map(|&o| {
            let d = f.at_offset(x0, o) - f0;
            d * d
        })
        .collect();
    Ok(SimilarityMap {
        center: x0,
        offsets,
        values,
    })
}

/// Mean count over the reflected window of the given radius.
pub fn local_mean(y: &CountImage, x0: Pixel, radius: usize) -> Result<f64> {
    y.check_pixel(x0)?;
    let sum: u64 = window_offsets(radius)
        .map(|o| y.at_offset(x0, o) as u64)
        .sum();
    Ok(sum as f64 / (2 * radius + 1).pow(2) as f64)
}

/// Kernel-normalised patch distance `Σ κ(q)·|Y(x₀+q) − Y(x₀+o+q)|² / Σ κ`.
pub fn patch_distance(y: &CountImage, x0: Pixel, o: Offset, kernel: &PatchKernel) -> f64 {
    let weighted: f64 = kernel
        .iter()
        .map(|(q, w)| {
            let a = y.at_offset(x0, q) as f64;
            let b = y.at_offset(x0, Offset::new(o.dr + q.dr, o.dc + q.dc)) as f64;
            w * (a - b) * (a - b)
        })
        .sum();
    weighted / kernel.total()
}

fn check_kernel(spec: WindowSpec, kernel: &PatchKernel) -> Result<()> {
    if kernel.radius() != spec.patch_radius {
        return Err(Error::invalid(format!(
            "kernel radius {} does not match patch radius {}",
            kernel.radius(),
            spec.patch_radius
        )));
    }
    Ok(())
}

/// Smoothed estimated similarity `(patch_distance − 2·f̄)⁺`.
///
/// With the rectangular kernel this is the plain estimate normalised by the
/// number of patch terms.
pub fn estimated_similarity(
    y: &CountImage,
    x0: Pixel,
    spec: WindowSpec,
    kernel: &PatchKernel,
    fbar: f64,
) -> Result<SimilarityMap> {
    y.check_pixel(x0)?;
    check_kernel(spec, kernel)?;
    if !(fbar >= 0.0) {
        return Err(Error::invalid(format!(
            "local mean must be >= 0, got {fbar}"
        )));
    }
    let offsets: Vec<Offset> = window_offsets(spec.search_radius).collect();
    let values = offsets
        .iter()
        .map(|&o| (patch_distance(y, x0, o, kernel) - 2.0 * fbar).max(0.0))
        .collect();
    Ok(SimilarityMap {
        center: x0,
        offsets,
        values,
    })
}

/// `f̄′(x₀)`: mean count over the odd offsets of the search window.
pub fn split_local_mean(y: &CountImage, split: &PixelSplit, radius: usize) -> Result<f64> {
    let x0 = split.center();
    y.check_pixel(x0)?;
    let (sum, count) = window_offsets(radius)
        .filter(|o| !o.is_even())
        .fold((0u64, 0usize), |(s, c), o| {
            (s + y.at_offset(x0, o) as u64, c + 1)
        });
    if count == 0 {
        return Err(Error::invalid(
            "split mean needs a search radius of at least 1",
        ));
    }
    Ok(sum as f64 / count as f64)
}

/// Patch distance over the odd patch offsets only, unweighted.
pub fn split_patch_distance(y: &CountImage, x0: Pixel, o: Offset, patch_radius: usize) -> f64 {
    let (sum, count) =
        window_offsets(patch_radius)
            .filter(|q| !q.is_even())
            .fold((0.0, 0usize), |(s, c), q| {
                let a = y.at_offset(x0, q) as f64;
                let b = y.at_offset(x0, Offset::new(o.dr + q.dr, o.dc + q.dc)) as f64;
                (s + (a - b) * (a - b), c + 1)
            });
    sum / count as f64
}

/// Split-sample estimated similarity, defined on the even search offsets.
///
/// Patch comparisons use only odd-offset pixels and the bias term uses the
/// odd-offset window mean, so the map is independent of the counts it will
/// later weight.
pub fn split_estimated_similarity(
    y: &CountImage,
    split: &PixelSplit,
    spec: WindowSpec,
) -> Result<SimilarityMap> {
    if spec.patch_radius == 0 {
        return Err(Error::invalid(
            "split similarity needs a patch radius of at least 1 (odd patch set is empty)",
        ));
    }
    let fbar = split_local_mean(y, split, spec.search_radius)?;
    let x0 = split.center();
    let offsets: Vec<Offset> = window_offsets(spec.search_radius)
        .filter(|o| o.is_even())
        .collect();
    let values = offsets
        .iter()
        .map(|&o| (split_patch_distance(y, x0, o, spec.patch_radius) - 2.0 * fbar).max(0.0))
        .collect();
    Ok(SimilarityMap {
        center: x0,
        offsets,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{checkerboard_split, reflect_index};
    use crate::kernels::{kernel_weights, KernelChoice};
    use crate::poisson::{sample_poisson, NoiseSeed};
    use proptest::prelude::*;

    fn hand_image_a() -> CountImage {
        CountImage::new(
            5,
            vec![
                3, 0, 7, 1, 4, //
                2, 9, 5, 5, 0, //
                8, 1, 6, 2, 3, //
                0, 4, 4, 7, 1, //
                6, 2, 0, 3, 5,
            ],
        )
        .unwrap()
    }

    fn hand_image_b() -> CountImage {
        CountImage::from_fn(5, |p| ((p.row * 7 + p.col * 3) % 11) as u32).unwrap()
    }

    /// Reflected read written out independently of `Image::at_offset`.
    fn read(y: &CountImage, r: isize, c: isize) -> f64 {
        let n = y.side();
        let fold = |k: isize| reflect_index(k, n);
        y.as_slice()[fold(r) * n + fold(c)] as f64
    }

    /// Straight double loop over the defining sum.
    fn brute_force(
        y: &CountImage,
        x0: Pixel,
        spec: WindowSpec,
        kappa: &dyn Fn(isize, isize) -> f64,
        fbar: f64,
    ) -> Vec<f64> {
        let (h, e) = (spec.search_radius as isize, spec.patch_radius as isize);
        let (r0, c0) = (x0.row as isize, x0.col as isize);
        let mut out = Vec::new();
        for dr in -h..=h {
            for dc in -h..=h {
                let mut num = 0.0;
                let mut den = 0.0;
                for qr in -e..=e {
                    for qc in -e..=e {
                        let k = kappa(qr, qc);
                        let d = read(y, r0 + qr, c0 + qc) - read(y, r0 + dr + qr, c0 + dc + qc);
                        num += k * d * d;
                        den += k;
                    }
                }
                out.push((num / den - 2.0 * fbar).max(0.0));
            }
        }
        out
    }

    #[test]
    fn oracle_constant_is_zero() {
        let f = IntensityImage::filled(6, 3.5).unwrap();
        let s = oracle_similarity(&f, Pixel::new(2, 2), WindowSpec::new(2, 1)).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_pointwise_and_ramp() {
        let f =
            IntensityImage::from_fn(7, |p| if p == Pixel::new(3, 3) { 1.0 } else { 3.0 }).unwrap();
        let s = oracle_similarity(&f, Pixel::new(3, 3), WindowSpec::new(1, 0)).unwrap();
        assert_eq!(s.value_at(Offset::new(0, 1)), Some(4.0));
        assert_eq!(s.value_at(Offset::ZERO), Some(0.0));

        let ramp = IntensityImage::from_fn(9, |p| p.col as f64).unwrap();
        let s = oracle_similarity(&ramp, Pixel::new(4, 4), WindowSpec::new(3, 0)).unwrap();
        for (o, v) in s.iter() {
            assert_eq!(v, (o.dc * o.dc) as f64);
        }
    }

    #[test]
    fn local_mean_examples() {
        let y = CountImage::filled(5, 7).unwrap();
        assert_eq!(local_mean(&y, Pixel::new(0, 4), 2).unwrap(), 7.0);

        let y = CountImage::from_fn(3, |p| (p.row * 3 + p.col + 1) as u32).unwrap();
        assert_eq!(local_mean(&y, Pixel::new(1, 1), 1).unwrap(), 5.0);

        // corner: rows {0,0,1} x cols {0,0,1} of 1..9
        let expected = [1, 1, 2, 1, 1, 2, 4, 4, 5].iter().sum::<u32>() as f64 / 9.0;
        assert_eq!(local_mean(&y, Pixel::new(0, 0), 1).unwrap(), expected);
    }

    #[test]
    fn estimated_constant_is_zero() {
        let y = CountImage::filled(6, 5).unwrap();
        let k = kernel_weights(KernelChoice::K0, 1).unwrap();
        let s = estimated_similarity(&y, Pixel::new(1, 1), WindowSpec::new(2, 1), &k, 5.0).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn estimated_single_pixel_patch() {
        let mut data = vec![0u32; 25];
        data[2 * 5 + 2] = 2;
        data[2 * 5 + 3] = 5;
        let y = CountImage::new(5, data).unwrap();
        let k = kernel_weights(KernelChoice::Rectangular, 0).unwrap();
        let s = estimated_similarity(&y, Pixel::new(2, 2), WindowSpec::new(1, 0), &k, 0.0).unwrap();
        assert_eq!(s.value_at(Offset::new(0, 1)), Some(9.0));
    }

    #[test]
    fn estimated_matches_brute_force() {
        let spec = WindowSpec::new(2, 1);
        for y in [hand_image_a(), hand_image_b()] {
            for choice in [
                KernelChoice::K0,
                KernelChoice::Rectangular,
                KernelChoice::Gaussian { width: 1.3 },
            ] {
                let k = kernel_weights(choice, 1).unwrap();
                let kappa = |qr: isize, qc: isize| match choice {
                    KernelChoice::K0 => 1.0 / 9.0,
                    KernelChoice::Rectangular => 1.0 / 9.0,
                    KernelChoice::Gaussian { width } => {
                        (-((qr * qr + qc * qc) as f64) / (2.0 * width)).exp()
                    }
                };
                for x0 in [Pixel::new(0, 0), Pixel::new(2, 2), Pixel::new(4, 1)] {
                    let fbar = 1.5;
                    let got = estimated_similarity(&y, x0, spec, &k, fbar).unwrap();
                    let want = brute_force(&y, x0, spec, &kappa, fbar);
                    for (g, w) in got.values.iter().zip(&want) {
                        assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
                    }
                }
            }
        }
    }

    #[test]
    fn split_constant_and_cardinality() {
        let y = CountImage::filled(7, 3).unwrap();
        let split = checkerboard_split(y.grid(), Pixel::new(3, 3)).unwrap();
        let spec = WindowSpec::new(2, 1);
        let s = split_estimated_similarity(&y, &split, spec).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(s.offsets.iter().all(|o| o.is_even()));
        assert_eq!(s.len(), (spec.search_size() + 1) / 2);

        let odd_patch = window_offsets(1).filter(|o| !o.is_even()).count();
        let even_patch = window_offsets(1).filter(|o| o.is_even()).count();
        assert_eq!(odd_patch, spec.patch_size() - even_patch);
    }

    #[test]
    fn split_degenerate_patch_rejected() {
        let y = CountImage::filled(5, 3).unwrap();
        let split = checkerboard_split(y.grid(), Pixel::new(2, 2)).unwrap();
        assert!(matches!(
            split_estimated_similarity(&y, &split, WindowSpec::new(1, 0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn split_matches_brute_force() {
        let y = hand_image_a();
        let spec = WindowSpec::new(2, 1);
        for x0 in [Pixel::new(2, 2), Pixel::new(0, 3)] {
            let split = checkerboard_split(y.grid(), x0).unwrap();
            let (r0, c0) = (x0.row as isize, x0.col as isize);
            let mut fsum = 0.0;
            let mut fcount = 0.0;
            for dr in -2isize..=2 {
                for dc in -2isize..=2 {
                    if (dr + dc) % 2 != 0 {
                        fsum += read(&y, r0 + dr, c0 + dc);
                        fcount += 1.0;
                    }
                }
            }
            let fbar = fsum / fcount;
            let got = split_estimated_similarity(&y, &split, spec).unwrap();
            let mut i = 0;
            for dr in -2isize..=2 {
                for dc in -2isize..=2 {
                    if (dr + dc) % 2 != 0 {
                        continue;
                    }
                    let mut s = 0.0;
                    let mut cnt = 0.0;
                    for qr in -1isize..=1 {
                        for qc in -1isize..=1 {
                            if (qr + qc) % 2 == 0 {
                                continue;
                            }
                            let d =
                                read(&y, r0 + qr, c0 + qc) - read(&y, r0 + dr + qr, c0 + dc + qc);
                            s += d * d;
                            cnt += 1.0;
                        }
                    }
                    let want = (s / cnt - 2.0 * fbar).max(0.0);
                    assert_eq!(got.offsets[i], Offset::new(dr, dc));
                    assert!((got.values[i] - want).abs() < 1e-12);
                    i += 1;
                }
            }
        }
    }

    #[test]
    fn bias_corrected_statistic_centred_on_constant() {
        // Y constant-mean 4: E|Y−Y'|² = 8 = 2f, so the statistic before the
        // positive part averages ≤ 0 up to Monte-Carlo error.
        let f = IntensityImage::filled(32, 4.0).unwrap();
        let k = kernel_weights(KernelChoice::Rectangular, 2).unwrap();
        let x0 = Pixel::new(16, 16);
        let o = Offset::new(3, -2);
        let stats: Vec<f64> = (0..400)
            .map(|s| {
                let y = sample_poisson(&f, NoiseSeed(s));
                patch_distance(&y, x0, o, &k) - 2.0 * local_mean(&y, x0, 4).unwrap()
            })
            .collect();
        let n = stats.len() as f64;
        let mean = stats.iter().sum::<f64>() / n;
        let sd = (stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean <= 3.0 * sd / n.sqrt(), "mean {mean}, sd {sd}");
        assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "mean {mean}, sd {sd}");
    }

    proptest! {
        #[test]
        fn estimated_values_nonnegative(
            data in proptest::collection::vec(0u32..20, 36),
            fbar in 0.0f64..30.0,
            r in 0usize..6, c in 0usize..6,
        ) {
            let y = CountImage::new(6, data).unwrap();
            let k = kernel_weights(KernelChoice::K0, 1).unwrap();
            let s = estimated_similarity(&y, Pixel::new(r, c), WindowSpec::new(2, 1), &k, fbar).unwrap();
            prop_assert!(s.values.iter().all(|&v| v >= 0.0));
            let split = checkerboard_split(y.grid(), Pixel::new(r, c)).unwrap();
            let s = split_estimated_similarity(&y, &split, WindowSpec::new(2, 1)).unwrap();
            prop_assert!(s.values.iter().all(|&v| v >= 0.0));
        }
    }
}
