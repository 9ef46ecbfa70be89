//! Command-line driver.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimators::BandwidthFunction;
use crate::experiments::{
    rate_experiment_with, similarity_concentration_with, ConcentrationOptions, RateEstimator,
    RateOptions,
};
use crate::image::{CountImage, IntensityImage, WindowSpec};
use crate::io::{read_counts, read_intensity, write_counts, write_intensity, ImageFormat};
use crate::metrics::MetricsReport;
use crate::phantoms::Phantom;
use crate::pipeline::{denoise, oracle_image, FilterConfig};
use crate::poisson::{sample_poisson, NoiseSeed};
use crate::theory::HolderSpec;

#[derive(Debug, Parser)]
#[command(
    name = "nlmpf",
    version,
    about = "Non-local means filtering for Poisson-noise images"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw Poisson counts from a clean intensity.
    Simulate(SimulateArgs),
    /// Run the two-step filter on a count image.
    Denoise(DenoiseArgs),
    /// Oracle estimate from the clean image and the counts.
    Oracle(OracleArgs),
    /// Compare an estimate with the clean image (CSV to stdout).
    Evaluate(EvaluateArgs),
    /// Monte-Carlo convergence-rate check (CSV).
    RateCheck(RateArgs),
    /// Time the filter on a phantom.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Bundled phantom: spots, galaxy, ridges, barbara, cells.
    #[arg(long, conflicts_with = "clean", required_unless_present = "clean")]
    phantom: Option<Phantom>,
    /// Clean intensity file (.csv or .pgm) instead of a phantom.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Side length when rendering a phantom.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Count image output (.pgm or .csv).
    #[arg(long)]
    output: PathBuf,
    /// Output format override: pgm8, pgm16, float_csv.
    #[arg(long)]
    format: Option<ImageFormat>,
    /// Also write the clean intensity here (float CSV).
    #[arg(long)]
    clean_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DenoiseArgs {
    /// Count image (.pgm or .csv).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Estimate output (.csv, or .pgm rounded for viewing).
    #[arg(long)]
    output: Option<PathBuf>,
    /// key = value run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named configuration.
    #[arg(long)]
    preset: Option<String>,
    /// Search window width (odd, e.g. 19 for 19×19).
    #[arg(long)]
    search: Option<usize>,
    /// Patch width (odd).
    #[arg(long)]
    patch: Option<usize>,
    /// Step-2 window radius.
    #[arg(long)]
    d: Option<usize>,
    /// Step-2 threshold.
    #[arg(long)]
    delta: Option<f64>,
    /// Bandwidth factor in H² = μ·√f̄.
    #[arg(long)]
    mu: Option<f64>,
    /// Step-2 Gaussian width.
    #[arg(long, visible_alias = "sigma-h")]
    hg: Option<f64>,
    /// Patch kernel: k0, rect, gaussian:<width>.
    #[arg(long)]
    kernel: Option<String>,
    /// plain or split.
    #[arg(long)]
    variant: Option<String>,
    /// Clean intensity; when given, prints a metrics report.
    #[arg(long)]
    clean: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Search window width (odd).
    #[arg(long, default_value_t = 15)]
    search: usize,
    /// Constant bandwidth H; without it H² = μ·√f̄.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
}

#[derive(Debug, Args)]
struct RateArgs {
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = 4.0)]
    gamma: f64,
    /// oracle, split, or concentration.
    #[arg(long, default_value = "oracle")]
    estimator: String,
    /// Pixel counts n = N², comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [4096usize, 16384, 65536])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluation pixels per axis.
    #[arg(long)]
    eval_grid: Option<usize>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = "spots")]
    phantom: Phantom,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 2,
        _ => 1,
    }
}

fn execute(cli: Cli) -> Result<()> {
    let threads = match &cli.command {
        Command::Denoise(args) => match (&args.config, cli.threads) {
            (Some(path), None) => RunConfig::load(path)?.threads,
            _ => cli.threads,
        },
        _ => cli.threads,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Denoise(a) => run_denoise(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Evaluate(a) => evaluate(a),
        Command::RateCheck(a) => rate_check(a),
        Command::Bench(a) => bench(a),
    })
}

fn output_format(path: &Path, forced: Option<ImageFormat>) -> Result<ImageFormat> {
    forced.map_or_else(|| ImageFormat::from_path(path), Ok)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let clean = match (&a.phantom, &a.clean) {
        (Some(p), _) => p.render(a.size)?,
        (None, Some(path)) => read_intensity(path)?,
        (None, None) => return Err(Error::invalid("need --phantom or --clean")),
    };
    let counts = sample_poisson(&clean, NoiseSeed(a.seed));
    write_counts(&counts, &a.output, output_format(&a.output, a.format)?)?;
    if let Some(path) = &a.clean_out {
        write_intensity(&clean, path, ImageFormat::FloatCsv)?;
    }
    Ok(())
}

fn run_denoise(a: DenoiseArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &a.preset {
        cfg.filter = FilterConfig::preset_by_name(name)
            .ok_or_else(|| Error::invalid(format!("unknown preset '{name}'")))?;
    }
    let numeric = [
        ("search", a.search.map(|v| v.to_string())),
        ("patch", a.patch.map(|v| v.to_string())),
        ("d", a.d.map(|v| v.to_string())),
        ("delta", a.delta.map(|v| v.to_string())),
        ("mu", a.mu.map(|v| v.to_string())),
        ("hg", a.hg.map(|v| v.to_string())),
        ("kernel", a.kernel.clone()),
        ("variant", a.variant.clone()),
    ];
    for (key, value) in numeric {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Some(p) = a.input {
        cfg.input = Some(p);
    }
    if let Some(p) = a.output {
        cfg.output = Some(p);
    }
    if let Some(p) = a.clean {
        cfg.clean = Some(p);
    }
    cfg.filter.validate()?;

    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::invalid("no input image given"))?;
    let y = read_counts(input)?;
    let start = Instant::now();
    let estimate = denoise(&y, &cfg.filter)?;
    let runtime_ms = start.elapsed().as_millis() as u64;

    if let Some(path) = &cfg.output {
        write_intensity(&estimate, path, ImageFormat::from_path(path)?)?;
    }
    if let Some(path) = &cfg.clean {
        let clean = read_intensity(path)?;
        report(
            &[
                ("noisy", &y.to_intensity(), 0),
                ("denoised", &estimate, runtime_ms),
            ],
            &clean,
        )?;
    }
    Ok(())
}

fn report(rows: &[(&str, &IntensityImage, u64)], clean: &IntensityImage) -> Result<()> {
    let mut out = String::from("image,");
    out.push_str(MetricsReport::CSV_HEADER);
    out.push('\n');
    for (name, img, ms) in rows {
        let r = MetricsReport::evaluate(*img, clean, *ms)?;
        out.push_str(&format!("{name},{}\n", r.csv_row()));
    }
    print_stdout(&out)
}

fn print_stdout(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(text.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn run_oracle(a: OracleArgs) -> Result<()> {
    if a.search % 2 == 0 {
        return Err(Error::invalid(format!(
            "search width must be odd, got {}",
            a.search
        )));
    }
    let f = read_intensity(&a.clean)?;
    let y: CountImage = read_counts(&a.input)?;
    let bandwidth = match a.bandwidth {
        Some(h) => BandwidthFunction::constant(h),
        None => BandwidthFunction::adaptive(a.mu),
    };
    bandwidth.validate()?;
    let est = oracle_image(&f, &y, WindowSpec::new(a.search / 2, 0), &bandwidth)?;
    write_intensity(&est, &a.output, ImageFormat::from_path(&a.output)?)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let clean = read_intensity(&a.clean)?;
    let est = read_intensity(&a.estimate)?;
    let r = MetricsReport::evaluate(&est, &clean, 0)?;
    print_stdout(&format!("{}\n{}\n", MetricsReport::CSV_HEADER, r.csv_row()))
}

fn rate_check(a: RateArgs) -> Result<()> {
    let spec = HolderSpec::new(a.beta, a.lipschitz, a.gamma)?;
    let csv = if a.estimator == "concentration" {
        let mut opts = ConcentrationOptions::default();
        if let Some(k) = a.eval_grid {
            opts.eval_grid = k;
        }
        similarity_concentration_with(&spec, &a.sizes, a.trials, a.seed, &opts)?.to_csv()
    } else {
        let estimator: RateEstimator = a.estimator.parse()?;
        let mut opts = RateOptions::default();
        if let Some(k) = a.eval_grid {
            opts.eval_grid = k;
        }
        rate_experiment_with(&spec, estimator, &a.sizes, a.trials, a.seed, &opts)?.to_csv()
    };
    match &a.output {
        Some(path) => Ok(std::fs::write(path, csv)?),
        None => print_stdout(&csv),
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(Error::invalid("--repeats must be >= 1"));
    }
    let clean = a.phantom.render(a.size)?;
    let y = sample_poisson(&clean, NoiseSeed(a.seed));
    let cfg = a.phantom.recommended_config();
    let mut out = String::from("phantom,size,threads,repeat,runtime_ms\n");
    for r in 0..a.repeats {
        let start = Instant::now();
        let est = denoise(&y, &cfg)?;
        let ms = start.elapsed().as_millis();
        std::hint::black_box(est);
        out.push_str(&format!(
            "{},{},{},{r},{ms}\n",
            a.phantom,
            a.size,
            rayon::current_num_threads()
        ));
    }
    print_stdout(&out)
}
