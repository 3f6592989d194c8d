use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gtvsr::fixtures::Fixture;
use gtvsr::harness::{run_benchmark, BenchmarkSpec, Method, DEFAULT_RATIO, DEFAULT_SEED};
use gtvsr::io::{read_cloud, resolve_format, write_cloud, Format};
use gtvsr::report::{write_benchmark_csv, write_diagnostics_csv, write_metrics_csv};
use gtvsr_core::{evaluate, superresolve, SigmaP, SolverConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_WARNINGS: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Point cloud super-resolution by graph total variation of surface normals.
#[derive(Debug, Parser)]
#[command(name = "gtvsr", version)]
struct Cli {
    /// Worker threads (all cores when omitted). Never changes results.
    #[arg(long, global = true, env = "GTVSR_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upsample a point cloud file.
    Upsample(UpsampleArgs),
    /// Downsample a ground truth, upsample it back and score every method.
    Benchmark(BenchmarkArgs),
    /// Score a result cloud against a ground truth.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Neighbors per node.
    #[arg(long, default_value_t = 8, env = "GTVSR_K")]
    k: usize,
    /// ADMM penalty.
    #[arg(long, default_value_t = 5.0, env = "GTVSR_RHO")]
    rho: f64,
    /// Proximal gradient step.
    #[arg(long, default_value_t = 0.1, env = "GTVSR_STEP")]
    step: f64,
    /// Edge-weight bandwidth: `auto` or a length in input units.
    #[arg(long, default_value = "auto", value_parser = parse_sigma_p, env = "GTVSR_SIGMA_P")]
    sigma_p: SigmaP,
    /// Red/blue alternation rounds.
    #[arg(long, default_value_t = 10, env = "GTVSR_MAX_OUTER")]
    max_outer: usize,
    /// ADMM iterations per color solve.
    #[arg(long, default_value_t = 200, env = "GTVSR_MAX_ADMM")]
    max_admm: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            k: self.k,
            rho: self.rho,
            step_t: self.step,
            sigma_p: self.sigma_p,
            outer_max_iters: self.max_outer,
            admm_max_iters: self.max_admm,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct UpsampleArgs {
    #[arg(long, env = "GTVSR_INPUT")]
    input: PathBuf,
    #[arg(long, env = "GTVSR_OUTPUT")]
    output: PathBuf,
    /// Number of output points.
    #[arg(
        long,
        env = "GTVSR_TARGET_COUNT",
        conflicts_with = "factor",
        required_unless_present = "factor"
    )]
    target_count: Option<usize>,
    /// Output size as a multiple of the input size.
    #[arg(long, env = "GTVSR_FACTOR")]
    factor: Option<f64>,
    /// Per-iteration ADMM residuals and objective as CSV.
    #[arg(long, env = "GTVSR_DIAGNOSTICS")]
    diagnostics: Option<PathBuf>,
    /// File format of input and output, overriding the extensions.
    #[arg(long, env = "GTVSR_FORMAT")]
    format: Option<Format>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Ground-truth cloud file.
    #[arg(
        long,
        env = "GTVSR_GROUND_TRUTH",
        conflicts_with = "fixture",
        required_unless_present = "fixture"
    )]
    ground_truth: Option<PathBuf>,
    /// Built-in synthetic ground truth: plane, sphere, cube or cylinder.
    #[arg(long, env = "GTVSR_FIXTURE")]
    fixture: Option<Fixture>,
    /// Points sampled from the fixture.
    #[arg(long, default_value_t = 2000, env = "GTVSR_FIXTURE_POINTS")]
    fixture_points: usize,
    /// Fraction of ground-truth points kept by the downsampler.
    #[arg(long, default_value_t = DEFAULT_RATIO, env = "GTVSR_RATIO")]
    ratio: f64,
    #[arg(long, default_value_t = DEFAULT_SEED, env = "GTVSR_SEED")]
    seed: u64,
    /// Methods to score (default all).
    #[arg(long, value_delimiter = ',', env = "GTVSR_METHODS")]
    methods: Vec<Method>,
    /// Neighbors for the point-to-plane normals.
    #[arg(long, default_value_t = 8, env = "GTVSR_K_NORMALS")]
    k_normals: usize,
    /// CSV destination (stdout when omitted).
    #[arg(long, env = "GTVSR_OUT")]
    out: Option<PathBuf>,
    /// Record wall-clock times instead of zeros.
    #[arg(long, env = "GTVSR_WALL_TIME")]
    wall_time: bool,
    #[arg(long, env = "GTVSR_FORMAT")]
    format: Option<Format>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long, env = "GTVSR_RESULT")]
    result: PathBuf,
    #[arg(long, env = "GTVSR_TRUTH")]
    truth: PathBuf,
    #[arg(long, default_value_t = 8, env = "GTVSR_K_NORMALS")]
    k_normals: usize,
}

fn parse_sigma_p(s: &str) -> Result<SigmaP, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(SigmaP::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaP::Fixed(v)),
        _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
    }
}

/// Arguments that parse but contradict each other or the input.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

enum Outcome {
    Clean,
    Warnings,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Warnings) => ExitCode::from(EXIT_WARNINGS),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Upsample(args) => upsample(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Metrics(args) => metrics(args),
    }
}

fn load(path: &Path, format: Option<Format>) -> Result<gtvsr_core::PointCloud> {
    let format = resolve_format(path, format)?;
    read_cloud(path, format).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn upsample(args: UpsampleArgs) -> Result<Outcome> {
    let output_format = resolve_format(&args.output, args.format)?;
    let input = load(&args.input, args.format)?;
    let n = input.len();
    let target = match (args.target_count, args.factor) {
        (Some(t), None) => t,
        (None, Some(f)) => {
            if !(f >= 1.0 && f.is_finite()) {
                return Err(usage(format!("--factor must be at least 1, got {f}")));
            }
            (n as f64 * f).round() as usize
        }
        _ => return Err(usage("give exactly one of --target-count and --factor")),
    };
    if target < n {
        return Err(usage(format!(
            "--target-count {target} is below the input size {n}"
        )));
    }
    let result = superresolve(&input, target, &args.solver.config())?;
    write_cloud(&result.cloud, &args.output, output_format)?;
    if let Some(path) = &args.diagnostics {
        let out = create(path)?;
        write_diagnostics_csv(&result.report, out)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for w in &result.report.warnings {
        eprintln!("warning: {w:?}");
    }
    Ok(if result.report.converged() {
        Outcome::Clean
    } else {
        Outcome::Warnings
    })
}

fn benchmark(args: BenchmarkArgs) -> Result<Outcome> {
    let (model, truth) = match (&args.ground_truth, args.fixture) {
        (Some(path), None) => {
            if !path.exists() {
                bail!("ground truth {} does not exist", path.display());
            }
            let model = path
                .file_stem()
                .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
            (model, load(path, args.format)?)
        }
        (None, Some(fixture)) => (
            fixture.name().to_string(),
            fixture.sample(args.fixture_points, args.seed),
        ),
        _ => return Err(usage("give exactly one of --ground-truth and --fixture")),
    };
    let mut spec = BenchmarkSpec::new(model, truth);
    spec.ratio = args.ratio;
    spec.seed = args.seed;
    spec.config = args.solver.config();
    spec.k_normals = args.k_normals;
    spec.wall_time = args.wall_time;
    if !args.methods.is_empty() {
        spec.methods = args.methods.clone();
    }
    let rows = run_benchmark(&spec)?;
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            write_benchmark_csv(&rows, &mut out)
                .with_context(|| format!("writing {}", path.display()))?;
            out.flush()?;
        }
        None => write_benchmark_csv(&rows, io::stdout().lock())?,
    }
    let mut clean = true;
    for solve in rows.iter().filter_map(|r| r.solve.as_ref()) {
        for w in &solve.report.warnings {
            eprintln!("warning: {w:?}");
        }
        clean &= solve.report.converged();
    }
    Ok(if clean {
        Outcome::Clean
    } else {
        Outcome::Warnings
    })
}

fn metrics(args: MetricsArgs) -> Result<Outcome> {
    let result = load(&args.result, None)?;
    let truth = load(&args.truth, None)?;
    let report = evaluate(&result, &truth, args.k_normals)?;
    let model = args
        .result
        .file_stem()
        .map_or_else(|| "result".into(), |s| s.to_string_lossy().into_owned());
    write_metrics_csv(&model, &report, io::stdout().lock())?;
    Ok(Outcome::Clean)
}
