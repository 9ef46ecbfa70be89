//! Monte-Carlo harness for the convergence-rate and concentration checks.
//!
//! Each experiment renders a fixed phantom per grid size, draws Poisson
//! counts per trial and evaluates an estimator at a lattice of interior
//! pixels. Trials run in parallel; every `(size, trial)` cell gets its own
//! seed and results are reduced in trial order, so the output does not
//! depend on scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{oracle_estimate, split_adaptive_estimate, BandwidthFunction};
use crate::image::{checkerboard_split, IntensityImage, Pixel, WindowSpec};
use crate::kernels::{kernel_weights, KernelChoice};
use crate::phantoms::{constant_phantom, holder_phantom};
use crate::poisson::{sample_poisson, NoiseSeed};
use crate::similarity::{estimated_similarity, local_mean, oracle_similarity};
use crate::theory::{optimal_search, oracle_rate_bound, HolderSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateEstimator {
    Oracle,
    SplitAdaptive,
}

impl std::str::FromStr for RateEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "oracle" => Ok(RateEstimator::Oracle),
            "split" | "split_adaptive" | "split-adaptive" => Ok(RateEstimator::SplitAdaptive),
            other => Err(Error::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Experiment knobs beyond the Hölder class, sizes, trials and seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Evaluation pixels per axis (the lattice has `eval_grid²` points).
    pub eval_grid: usize,
    /// Patch scaling exponent: patch radius `≈ patch_scale · N^{1−2α}`.
    pub alpha: f64,
    pub patch_scale: f64,
    /// Oracle bandwidth `H = oracle_factor · L · h^β`.
    pub oracle_factor: f64,
    /// Split bandwidth `H = split_scale · n^{α−½} · √ln n`.
    pub split_scale: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            eval_grid: 16,
            alpha: 0.25,
            patch_scale: 0.5,
            oracle_factor: 2.0,
            split_scale: 20.0,
        }
    }
}

impl RateOptions {
    fn validate(&self) -> Result<()> {
        if self.eval_grid == 0 {
            return Err(Error::invalid("eval_grid must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1/2), got {}",
                self.alpha
            )));
        }
        for (name, v) in [
            ("patch_scale", self.patch_scale),
            ("oracle_factor", self.oracle_factor),
            ("split_scale", self.split_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn patch_radius(&self, side: usize) -> usize {
        ((self.patch_scale * (side as f64).powf(1.0 - 2.0 * self.alpha)).round() as usize).max(1)
    }
}

/// Outcome of a rate experiment, one entry per size.
#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    /// Pixel counts `n = N²`, strictly increasing.
    pub sizes: Vec<usize>,
    /// Mean over evaluation pixels of the per-pixel Monte-Carlo MSE.
    pub mse: Vec<f64>,
    /// Spread of the per-pixel MSE across evaluation pixels.
    pub mse_std: Vec<f64>,
    /// `c₀ · n^{−2β/(2β+2)}`.
    pub bound: Vec<f64>,
    /// Per size, the number of evaluation pixels whose MSE is within the bound.
    pub cells_within_bound: Vec<usize>,
    pub cells_per_size: usize,
    pub fitted_slope: f64,
    pub theory_slope: f64,
}

impl RateResult {
    pub const CSV_HEADER: &'static str = "n,mse_mean,mse_std,bound_c0_rate";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.sizes.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.sizes[i], self.mse[i], self.mse_std[i], self.bound[i]
            ));
        }
        out
    }

    /// Fraction of `(pixel, size)` cells whose MSE is within the bound.
    pub fn fraction_within_bound(&self) -> f64 {
        let total = self.cells_per_size * self.sizes.len();
        self.cells_within_bound.iter().sum::<usize>() as f64 / total as f64
    }
}

/// Outcome of the similarity concentration experiment, one entry per size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationResult {
    pub sizes: Vec<usize>,
    /// 99th percentile of `max_x |ρ̂² − ρ²|` over all trials and evaluation pixels.
    pub p99: Vec<f64>,
    pub mean: Vec<f64>,
    pub fitted_slope: f64,
    /// Slope ceiling `−(½ − α) + 0.1`.
    pub slope_limit: f64,
}

impl ConcentrationResult {
    pub const CSV_HEADER: &'static str = "n,p99,mean";

    pub fn strictly_decreasing(&self) -> bool {
        self.p99.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.sizes.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.sizes[i], self.p99[i], self.mean[i]
            ));
        }
        out
    }
}

/// Seed for one `(size, trial)` cell, mixed with SplitMix64.
pub fn cell_seed(master: u64, n: usize, trial: usize) -> NoiseSeed {
    let mut z = master;
    for word in [n as u64, trial as u64] {
        z = splitmix64(z ^ splitmix64(word));
    }
    NoiseSeed(z)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two paired points"));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("slope fit needs positive finite values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct x values"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// Nearest-rank percentile (`q` in `[0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Sides `N` for pixel counts `n = N²`; sizes must be strictly increasing perfect squares.
fn sides_of(sizes: &[usize]) -> Result<Vec<usize>> {
    if sizes.len() < 2 {
        return Err(Error::invalid("experiments need at least two sizes"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sizes must be strictly increasing"));
    }
    sizes
        .iter()
        .map(|&n| {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n || side == 0 {
                Err(Error::invalid(format!(
                    "size {n} is not a positive perfect square"
                )))
            } else {
                Ok(side)
            }
        })
        .collect()
}

/// `k × k` lattice of pixels at distance at least `margin` from the border.
pub fn interior_lattice(side: usize, margin: usize, k: usize) -> Result<Vec<Pixel>> {
    if 2 * margin >= side {
        return Err(Error::invalid(format!(
            "margin {margin} leaves no interior on a {side}x{side} grid"
        )));
    }
    let lo = margin as f64;
    let hi = (side - 1 - margin) as f64;
    let coords: Vec<usize> = (0..k)
        .map(|i| {
            if k == 1 {
                ((lo + hi) / 2.0).round() as usize
            } else {
                (lo + (hi - lo) * i as f64 / (k - 1) as f64).round() as usize
            }
        })
        .collect();
    Ok(coords
        .iter()
        .flat_map(|&r| coords.iter().map(move |&c| Pixel::new(r, c)))
        .collect())
}

/// Run `trial` for every trial in parallel and return the per-trial outputs in order.
fn run_trials<T, F>(trials: usize, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..trials).into_par_iter().map(body).collect()
}

/// Rate experiment with default options.
pub fn rate_experiment(
    spec: &HolderSpec,
    estimator: RateEstimator,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<RateResult> {
    rate_experiment_with(
        spec,
        estimator,
        sizes,
        trials,
        seed,
        &RateOptions::default(),
    )
}

pub fn rate_experiment_with(
    spec: &HolderSpec,
    estimator: RateEstimator,
    sizes: &[usize],
    trials: usize,
    seed: u64,
    opts: &RateOptions,
) -> Result<RateResult> {
    spec.validate()?;
    opts.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let sides = sides_of(sizes)?;

    let mut result = RateResult {
        sizes: sizes.to_vec(),
        mse: Vec::new(),
        mse_std: Vec::new(),
        bound: Vec::new(),
        cells_within_bound: Vec::new(),
        cells_per_size: opts.eval_grid * opts.eval_grid,
        fitted_slope: f64::NAN,
        theory_slope: spec.theory_slope(),
    };

    for (&n, &side) in sizes.iter().zip(&sides) {
        let f = holder_phantom(side, spec)?;
        let search = optimal_search(side, spec).radius_px.max(1);
        let (window, bandwidth) = match estimator {
            RateEstimator::Oracle => {
                let h = search as f64 / side as f64;
                let big_h = opts.oracle_factor * spec.lipschitz * h.powf(spec.beta);
                (
                    WindowSpec::new(search, 0),
                    BandwidthFunction::constant(big_h),
                )
            }
            RateEstimator::SplitAdaptive => {
                let nf = n as f64;
                let big_h = opts.split_scale * nf.powf(opts.alpha - 0.5) * nf.ln().sqrt();
                (
                    WindowSpec::new(search, opts.patch_radius(side)),
                    BandwidthFunction::constant(big_h),
                )
            }
        };
        let pixels = interior_lattice(
            side,
            window.search_radius + window.patch_radius,
            opts.eval_grid,
        )?;
        let splits = pixels
            .iter()
            .map(|&p| checkerboard_split(f.grid(), p))
            .collect::<Result<Vec<_>>>()?;

        let per_trial = run_trials(trials, |t| {
            let y = sample_poisson(&f, cell_seed(seed, n, t));
            pixels
                .iter()
                .zip(&splits)
                .map(|(&p, split)| {
                    let est = match estimator {
                        RateEstimator::Oracle => oracle_estimate(&f, &y, p, window, &bandwidth)?,
                        RateEstimator::SplitAdaptive => {
                            split_adaptive_estimate(&y, split, window, &bandwidth)?
                        }
                    };
                    Ok((est - f.get(p)).powi(2))
                })
                .collect::<Result<Vec<f64>>>()
        })?;

        let mut per_pixel = vec![0.0; pixels.len()];
        for errs in &per_trial {
            for (acc, e) in per_pixel.iter_mut().zip(errs) {
                *acc += e;
            }
        }
        per_pixel.iter_mut().for_each(|v| *v /= trials as f64);

        let bound = oracle_rate_bound(n, spec);
        let k = per_pixel.len() as f64;
        let mean = per_pixel.iter().sum::<f64>() / k;
        let var = per_pixel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        result.mse.push(mean);
        result.mse_std.push(var.sqrt());
        result.bound.push(bound);
        result
            .cells_within_bound
            .push(per_pixel.iter().filter(|&&v| v <= bound).count());
    }

    let ns: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    result.fitted_slope = loglog_slope(&ns, &result.mse)?;
    Ok(result)
}

/// Which intensity the concentration experiment uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConcentrationPhantom {
    /// Constant image at level `Γ`.
    Constant,
    Holder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationOptions {
    pub phantom: ConcentrationPhantom,
    pub eval_grid: usize,
    pub alpha: f64,
    pub patch_scale: f64,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        Self {
            phantom: ConcentrationPhantom::Constant,
            eval_grid: 4,
            alpha: 0.25,
            patch_scale: 0.5,
        }
    }
}

/// Concentration experiment with default options (constant phantom at level `Γ`).
pub fn similarity_concentration_experiment(
    spec: &HolderSpec,
    sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConcentrationResult> {
    similarity_concentration_with(spec, sizes, trials, seed, &ConcentrationOptions::default())
}

/// Records `max_x |ρ̂²(x) − ρ²(x)|` over the search window, with the
/// rectangular kernel, per trial and evaluation pixel.
pub fn similarity_concentration_with(
    spec: &HolderSpec,
    sizes: &[usize],
    trials: usize,
    seed: u64,
    opts: &ConcentrationOptions,
) -> Result<ConcentrationResult> {
    spec.validate()?;
    let rate_opts = RateOptions {
        eval_grid: opts.eval_grid,
        alpha: opts.alpha,
        patch_scale: opts.patch_scale,
        ..RateOptions::default()
    };
    rate_opts.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let sides = sides_of(sizes)?;
    let mut p99 = Vec::new();
    let mut means = Vec::new();

    for (&n, &side) in sizes.iter().zip(&sides) {
        let f = match opts.phantom {
            ConcentrationPhantom::Constant => constant_phantom(side, spec.gamma)?,
            ConcentrationPhantom::Holder => holder_phantom(side, spec)?,
        };
        let window = WindowSpec::new(
            optimal_search(side, spec).radius_px.max(1),
            rate_opts.patch_radius(side),
        );
        let kernel = kernel_weights(KernelChoice::Rectangular, window.patch_radius)?;
        let pixels = interior_lattice(
            side,
            window.search_radius + window.patch_radius,
            opts.eval_grid,
        )?;
        let truth = oracle_truth(&f, &pixels, window)?;

        let per_trial = run_trials(trials, |t| {
            let y = sample_poisson(&f, cell_seed(seed, n, t));
            pixels
                .iter()
                .zip(&truth)
                .map(|(&p, rho)| {
                    let fbar = local_mean(&y, p, window.search_radius)?;
                    let est = estimated_similarity(&y, p, window, &kernel, fbar)?;
                    Ok(est
                        .values
                        .iter()
                        .zip(rho)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max))
                })
                .collect::<Result<Vec<f64>>>()
        })?;

        let stats: Vec<f64> = per_trial.into_iter().flatten().collect();
        p99.push(percentile(&stats, 0.99));
        means.push(stats.iter().sum::<f64>() / stats.len() as f64);
    }

    let ns: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    Ok(ConcentrationResult {
        sizes: sizes.to_vec(),
        fitted_slope: loglog_slope(&ns, &p99)?,
        p99,
        mean: means,
        slope_limit: -(0.5 - opts.alpha) + 0.1,
    })
}

fn oracle_truth(f: &IntensityImage, pixels: &[Pixel], window: WindowSpec) -> Result<Vec<Vec<f64>>> {
    pixels
        .iter()
        .map(|&p| Ok(oracle_similarity(f, p, WindowSpec::new(window.search_radius, 0))?.values))
        .collect()
}
