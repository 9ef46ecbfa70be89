//! Whole-image weighted-mean filter driven offset by offset.
//!
//! For every search offset `o` the squared-difference image
//! `D_o(s) = (Y(s) − Y(s+o))²` is built once and reduced to per-pixel patch
//! distances with integral images (box-shaped kernels, including κ₀ as a sum
//! of nested boxes) or two 1-D passes (the Gaussian kernel). Counts are
//! integers, so box sums are exact in `f64`.
//!
//! Work is split into fixed-height row bands. Each pixel visits the offsets in
//! the same order whatever the banding or thread count, so the output is
//! bit-for-bit reproducible.

use rayon::prelude::*;

use crate::image::{reflect_index, window_offsets, CountImage, Offset};
use crate::kernels::{KernelChoice, PatchKernel};

const BAND_ROWS: usize = 16;

/// How a patch distance is formed from `D_o`.
#[derive(Debug, Clone)]
pub(crate) enum PatchReduce {
    /// `Σ_k coeff_k · boxsum_k / normalizer`.
    Boxes {
        terms: Vec<(usize, f64)>,
        normalizer: f64,
    },
    /// Separable weights `g(a)·g(b)`, `g` indexed from `-radius`.
    Separable { taps: Vec<f64>, normalizer: f64 },
    /// Unweighted mean over the patch offsets of odd parity.
    OddParity { normalizer: f64 },
}

impl PatchReduce {
    pub(crate) fn for_kernel(kernel: &PatchKernel) -> Self {
        let e = kernel.radius();
        match kernel.choice() {
            KernelChoice::Rectangular => PatchReduce::Boxes {
                terms: vec![(e, 1.0)],
                normalizer: (2 * e + 1).pow(2) as f64,
            },
            KernelChoice::K0 if e == 0 => PatchReduce::Boxes {
                terms: vec![(0, 1.0)],
                normalizer: 1.0,
            },
            // κ₀ = Σ_{k=1..e} 1{‖o‖∞ ≤ k}/(2k+1)², whose total is e
            KernelChoice::K0 => PatchReduce::Boxes {
                terms: (1..=e)
                    .map(|k| (k, 1.0 / ((2 * k + 1) * (2 * k + 1)) as f64))
                    .collect(),
                normalizer: e as f64,
            },
            KernelChoice::Gaussian { width } => {
                let taps: Vec<f64> = (-(e as isize)..=e as isize)
                    .map(|a| (-((a * a) as f64) / (2.0 * width)).exp())
                    .collect();
                let s: f64 = taps.iter().sum();
                PatchReduce::Separable {
                    taps,
                    normalizer: s * s,
                }
            }
        }
    }

    pub(crate) fn odd_parity(patch_radius: usize) -> Self {
        let m = (2 * patch_radius + 1).pow(2);
        PatchReduce::OddParity {
            normalizer: ((m - 1) / 2) as f64,
        }
    }
}

/// Everything the filter needs besides the counts.
pub(crate) struct FilterPlan {
    pub search_radius: usize,
    pub patch_radius: usize,
    pub reduce: PatchReduce,
    /// Only even offsets enter the average.
    pub even_offsets_only: bool,
    /// Per-pixel bias subtracted before the positive part; `None` for raw distances.
    pub bias: Option<Vec<f64>>,
    /// Per-pixel `H²`.
    pub h2: Vec<f64>,
}

struct Padded {
    side: usize,
    pad: usize,
    data: Vec<f64>,
}

impl Padded {
    fn new(y: &CountImage, pad: usize) -> Self {
        let n = y.side();
        let side = n + 2 * pad;
        let src = y.as_slice();
        let mut data = Vec::with_capacity(side * side);
        for r in 0..side {
            let sr = reflect_index(r as isize - pad as isize, n);
            for c in 0..side {
                let sc = reflect_index(c as isize - pad as isize, n);
                data.push(src[sr * n + sc] as f64);
            }
        }
        Self { side, pad, data }
    }

    /// Value at image coordinates (may be negative down to `-pad`).
    #[inline]
    fn at(&self, r: isize, c: isize) -> f64 {
        let pr = (r + self.pad as isize) as usize;
        let pc = (c + self.pad as isize) as usize;
        self.data[pr * self.side + pc]
    }
}

struct Scratch {
    diff: Vec<f64>,
    integral: Vec<f64>,
    integral_alt: Vec<f64>,
    rows: Vec<f64>,
    dist: Vec<f64>,
    num: Vec<f64>,
    den: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Runs the filter and returns the estimate per pixel, row-major.
pub(crate) fn run(y: &CountImage, plan: &FilterPlan) -> Vec<f64> {
    let n = y.side();
    let padded = Padded::new(y, plan.search_radius + plan.patch_radius);
    let offsets: Vec<Offset> = window_offsets(plan.search_radius)
        .filter(|o| !plan.even_offsets_only || o.is_even())
        .collect();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(BAND_ROWS * n)
        .enumerate()
        .for_each(|(band, chunk)| {
            let r0 = band * BAND_ROWS;
            let rows = chunk.len() / n;
            filter_band(&padded, n, r0, rows, &offsets, plan, chunk);
        });
    out
}

fn filter_band(
    y: &Padded,
    n: usize,
    r0: usize,
    rows: usize,
    offsets: &[Offset],
    plan: &FilterPlan,
    out: &mut [f64],
) {
    let e = plan.patch_radius;
    let hd = rows + 2 * e;
    let wd = n + 2 * e;
    let cells = rows * n;
    let mut s = Scratch {
        diff: vec![0.0; hd * wd],
        integral: vec![0.0; (hd + 1) * (wd + 1)],
        integral_alt: match plan.reduce {
            PatchReduce::OddParity { .. } => vec![0.0; (hd + 1) * (wd + 1)],
            _ => Vec::new(),
        },
        rows: match plan.reduce {
            PatchReduce::Separable { .. } => vec![0.0; hd * n],
            _ => Vec::new(),
        },
        dist: vec![0.0; cells],
        num: vec![0.0; cells],
        den: vec![0.0; cells],
        lo: vec![f64::INFINITY; cells],
        hi: vec![f64::NEG_INFINITY; cells],
    };
    let top = r0 as isize - e as isize;
    let left = -(e as isize);

    for &o in offsets {
        for lr in 0..hd {
            let r = top + lr as isize;
            let row = &mut s.diff[lr * wd..(lr + 1) * wd];
            for (lc, d) in row.iter_mut().enumerate() {
                let c = left + lc as isize;
                let v = y.at(r, c) - y.at(r + o.dr, c + o.dc);
                *d = v * v;
            }
        }
        patch_distances(&mut s, plan, r0, rows, n, hd, wd);

        for i in 0..cells {
            let r = (r0 + i / n) as isize;
            let c = (i % n) as isize;
            let g = r as usize * n + c as usize;
            let sim = match &plan.bias {
                Some(bias) => (s.dist[i] - bias[g]).max(0.0),
                None => s.dist[i],
            };
            let w = (-sim / plan.h2[g]).exp();
            let v = y.at(r + o.dr, c + o.dc);
            s.num[i] += w * (v - y.at(r, c));
            s.den[i] += w;
            s.lo[i] = s.lo[i].min(v);
            s.hi[i] = s.hi[i].max(v);
        }
    }

    for (i, slot) in out.iter_mut().enumerate() {
        let r = (r0 + i / n) as isize;
        let c = (i % n) as isize;
        let est = y.at(r, c) + s.num[i] / s.den[i];
        *slot = est.clamp(s.lo[i], s.hi[i]);
    }
}

/// Fills `s.dist` with the normalised patch distance for every band pixel.
fn patch_distances(
    s: &mut Scratch,
    plan: &FilterPlan,
    r0: usize,
    rows: usize,
    n: usize,
    hd: usize,
    wd: usize,
) {
    let e = plan.patch_radius;
    match &plan.reduce {
        PatchReduce::Boxes { terms, normalizer } => {
            integrate(&s.diff, &mut s.integral, hd, wd, |_, _| true);
            for i in 0..rows * n {
                let (lr, lc) = (i / n + e, i % n + e);
                let total: f64 = terms
                    .iter()
                    .map(|&(k, coeff)| coeff * box_sum(&s.integral, wd, lr, lc, k))
                    .sum();
                s.dist[i] = total / normalizer;
            }
        }
        PatchReduce::OddParity { normalizer } => {
            // absolute parity of local cell (lr, lc) is (lr + lc + r0) mod 2
            let base = r0 % 2;
            integrate(&s.diff, &mut s.integral, hd, wd, |lr, lc| {
                (lr + lc + base) % 2 == 0
            });
            integrate(&s.diff, &mut s.integral_alt, hd, wd, |lr, lc| {
                (lr + lc + base) % 2 == 1
            });
            for i in 0..rows * n {
                let (lr, lc) = (i / n + e, i % n + e);
                // odd offsets from an even pixel land on odd pixels and vice versa
                let pixel_even = (r0 + i / n + i % n) % 2 == 0;
                let table = if pixel_even {
                    &s.integral_alt
                } else {
                    &s.integral
                };
                s.dist[i] = box_sum(table, wd, lr, lc, e) / normalizer;
            }
        }
        PatchReduce::Separable { taps, normalizer } => {
            for lr in 0..hd {
                let src = &s.diff[lr * wd..(lr + 1) * wd];
                let dst = &mut s.rows[lr * n..(lr + 1) * n];
                for (c, d) in dst.iter_mut().enumerate() {
                    *d = taps
                        .iter()
                        .zip(&src[c..c + taps.len()])
                        .map(|(g, v)| g * v)
                        .sum();
                }
            }
            for i in 0..rows * n {
                let (r, c) = (i / n, i % n);
                let total: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(a, g)| g * s.rows[(r + a) * n + c])
                    .sum();
                s.dist[i] = total / normalizer;
            }
        }
    }
}

/// Summed-area table with a zero first row and column.
fn integrate(
    src: &[f64],
    dst: &mut [f64],
    h: usize,
    w: usize,
    keep: impl Fn(usize, usize) -> bool,
) {
    let stride = w + 1;
    dst[..stride].fill(0.0);
    for r in 0..h {
        let mut run = 0.0;
        dst[(r + 1) * stride] = 0.0;
        for c in 0..w {
            if keep(r, c) {
                run += src[r * w + c];
            }
            dst[(r + 1) * stride + c + 1] = dst[r * stride + c + 1] + run;
        }
    }
}

/// Sum over the `(2k+1)²` box centred at `(r, c)` of the source grid.
#[inline]
fn box_sum(table: &[f64], w: usize, r: usize, c: usize, k: usize) -> f64 {
    let stride = w + 1;
    let (r1, r2) = (r - k, r + k + 1);
    let (c1, c2) = (c - k, c + k + 1);
    table[r2 * stride + c2] - table[r1 * stride + c2] - table[r2 * stride + c1]
        + table[r1 * stride + c1]
}
