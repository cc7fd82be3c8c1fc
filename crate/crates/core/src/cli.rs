//! The `ecc` command line: compute curves, batch-process directories,
//! generate synthetic volumes and benchmark the smoothing + ECC pipeline.

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};

use crate::curve::{self, CurveFormat};
use crate::datagen::{self, GenKind, GenSpec};
use crate::engine::{self, ChunkPlan, ChunkTarget, EngineOptions, RawFileSource};
use crate::error::{Error, Result};
use crate::exec::{available_workers, Workers};
use crate::grid::{self, Dims, Endian, Image, ValueKind};
use crate::report::{gvox_per_s, ms, RunReport};

#[derive(Debug, Parser)]
#[command(name = "ecc", version, about = "Euler characteristic curves of 2D and 3D grayscale volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the curve of one raw volume.
    Compute(ComputeArgs),
    /// Compute curves for every matching file in a directory.
    Batch(BatchArgs),
    /// Generate a synthetic raw volume plus sidecar metadata.
    Gen(GenArgs),
    /// Time repeated {Gaussian smoothing; ECC} on an in-memory image.
    Bench(BenchArgs),
}

/// Flags shared by `compute` and `batch`.
#[derive(Debug, Clone, Args)]
pub struct VolumeArgs {
    /// Extents W0 W1 [W2] (axis 0 slowest). Falls back to `<file>.meta`.
    #[arg(long, num_args = 2..=3, value_name = "W")]
    pub dims: Option<Vec<usize>>,

    /// Value type of the raw file [default: sidecar value, else f32].
    #[arg(long, value_parser = parse_kind)]
    pub dtype: Option<ValueKind>,

    /// Number of chunks along axis 0 [default: max(2, workers)].
    #[arg(long, conflicts_with = "memory_budget")]
    pub chunks: Option<usize>,

    /// Cap on resident padded-chunk storage, in bytes (suffixes K, M, G).
    #[arg(long, value_parser = parse_bytes, value_name = "BYTES")]
    pub memory_budget: Option<u64>,

    /// Kernel worker threads [default: hardware parallelism].
    #[arg(long)]
    pub workers: Option<usize>,

    /// Curve file format.
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    pub format: CurveFormat,

    /// Read F32 files as big-endian.
    #[arg(long)]
    pub big_endian: bool,
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    /// Headerless raw volume.
    pub input: PathBuf,

    #[command(flatten)]
    pub volume: VolumeArgs,

    /// Curve output path [default: stdout].
    #[arg(short, long)]
    pub output: Option<PathBuf>,

    /// Also write the raw VCEC (`threshold,change` CSV).
    #[arg(long, value_name = "PATH")]
    pub vcec_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    pub directory: PathBuf,

    /// File-name pattern.
    #[arg(long, default_value = "*.raw")]
    pub glob: String,

    #[command(flatten)]
    pub volume: VolumeArgs,

    /// Where curves go [default: next to the inputs].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "uniform", value_parser = parse_gen_kind)]
    pub kind: GenKind,

    #[arg(long, num_args = 2..=3, required = true, value_name = "W")]
    pub dims: Vec<usize>,

    #[arg(long, default_value = "f32", value_parser = parse_kind)]
    pub dtype: ValueKind,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Smoothing σ in voxels (grf); 0 disables smoothing.
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,

    /// Quantization levels (grf).
    #[arg(long, default_value_t = datagen::DEFAULT_LEVELS)]
    pub levels: usize,

    #[arg(short, long)]
    pub output: PathBuf,

    /// Write F32 values big-endian.
    #[arg(long)]
    pub big_endian: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Image extents W0 W1 [W2].
    #[arg(long, num_args = 2..=3, default_values_t = [1024, 1024], value_name = "W")]
    pub size: Vec<usize>,

    #[arg(long, default_value = "f32", value_parser = parse_kind)]
    pub dtype: ValueKind,

    /// Pipeline iterations.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub iters: u64,

    /// Input image kind.
    #[arg(long, default_value = "grf", value_parser = parse_gen_kind)]
    pub kind: GenKind,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// σ of the smoothing step, in voxels.
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,

    /// Smoothing kernel width (odd).
    #[arg(long, default_value_t = 13)]
    pub width: usize,

    #[arg(long)]
    pub workers: Option<usize>,

    #[arg(long)]
    pub chunks: Option<usize>,
}

fn parse_kind(s: &str) -> std::result::Result<ValueKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<CurveFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_gen_kind(s: &str) -> std::result::Result<GenKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Byte count with an optional binary suffix: `512`, `64M`, `2GiB`.
pub fn parse_bytes(s: &str) -> std::result::Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().map_err(|_| format!("`{s}` is not a byte count"))?;
    let shift = match unit.to_ascii_lowercase().as_str() {
        "" | "b" => 0,
        "k" | "kb" | "kib" => 10,
        "m" | "mb" | "mib" => 20,
        "g" | "gb" | "gib" => 30,
        "t" | "tb" | "tib" => 40,
        _ => return Err(format!("unknown unit in `{s}`")),
    };
    n.checked_mul(1 << shift).ok_or_else(|| format!("`{s}` overflows"))
}

/// Failures that are the caller's fault (exit 2) rather than runtime errors.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

pub fn main() -> ExitCode {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> ExitCode {
    let outcome = match cli.command {
        Command::Compute(a) => cmd_compute(&a),
        Command::Batch(a) => cmd_batch(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

struct Resolved {
    dims: Dims,
    kind: ValueKind,
    endian: Endian,
    plan: ChunkPlan,
}

fn resolve_volume(path: &Path, args: &VolumeArgs, workers: usize) -> std::result::Result<Resolved, Failure> {
    let sidecar = grid::read_sidecar(path)?;
    let dims = match (&args.dims, sidecar) {
        (Some(d), _) => Dims::from_slice(d).map_err(|e| Failure::Usage(e.to_string()))?,
        (None, Some((d, _))) => d,
        (None, None) => {
            return Err(Failure::Usage(format!(
                "no --dims given and no sidecar {} found",
                grid::sidecar_path(path).display()
            )))
        }
    };
    let kind = args
        .dtype
        .or(sidecar.map(|(_, k)| k))
        .unwrap_or(ValueKind::F32);
    let plan = match (args.memory_budget, args.chunks) {
        (Some(budget), _) => engine::plan_for_budget(dims, kind, budget),
        (None, c) => engine::plan_chunks(dims, kind, ChunkTarget::Count(c.unwrap_or(workers.max(2)))),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;
    let endian = if args.big_endian { Endian::Big } else { Endian::Little };
    Ok(Resolved {
        dims,
        kind,
        endian,
        plan,
    })
}

fn make_workers(requested: Option<usize>) -> std::result::Result<Workers, Failure> {
    match requested {
        Some(0) => Err(Failure::Usage("--workers must be at least 1".into())),
        Some(n) => Ok(Workers::new(n)?),
        None => Ok(Workers::new(available_workers())?),
    }
}

/// One file through the streaming engine; returns the curve text and report.
fn compute_file(
    path: &Path,
    args: &VolumeArgs,
    workers: &Workers,
) -> std::result::Result<(curve::EccCurve, engine::GlobalVcec, RunReport), Failure> {
    let r = resolve_volume(path, args, workers.count())?;
    let source = RawFileSource::open(path, r.dims, r.kind, r.endian)?;
    let (vcec, stats) = engine::file_vcec_with(source, &r.plan, workers, &EngineOptions::default())?;
    let ecc = curve::vcec_to_ecc(&vcec)?;
    let report = RunReport::from_stats(r.dims.voxel_count() as u64, &stats);
    Ok((ecc, vcec, report))
}

fn cmd_compute(a: &ComputeArgs) -> std::result::Result<ExitCode, Failure> {
    let t0 = Instant::now();
    let workers = make_workers(a.volume.workers)?;
    let (ecc, vcec, mut report) = compute_file(&a.input, &a.volume, &workers)?;
    match &a.output {
        Some(p) => curve::write_curve(&ecc, a.volume.format, File::create(p)?)?,
        None => curve::write_curve(&ecc, a.volume.format, io::stdout().lock())?,
    }
    if let Some(p) = &a.vcec_out {
        curve::write_vcec(&vcec, File::create(p)?)?;
    }
    report.total = t0.elapsed();
    eprintln!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_batch(a: &BatchArgs) -> std::result::Result<ExitCode, Failure> {
    let t0 = Instant::now();
    if !a.directory.is_dir() {
        return Err(Failure::Usage(format!("{} is not a directory", a.directory.display())));
    }
    let pattern = glob::Pattern::new(&a.glob).map_err(|e| Failure::Usage(format!("bad --glob: {e}")))?;
    let mut files: Vec<PathBuf> = fs::read_dir(&a.directory)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| pattern.matches(n))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        eprintln!("warning: no files in {} match `{}`", a.directory.display(), a.glob);
        return Ok(ExitCode::SUCCESS);
    }
    let out_dir = a.out_dir.clone().unwrap_or_else(|| a.directory.clone());
    fs::create_dir_all(&out_dir)?;
    let ext = match a.volume.format {
        CurveFormat::Csv => "csv",
        CurveFormat::Json => "json",
    };
    let workers = make_workers(a.volume.workers)?;

    let mut failures = 0usize;
    let mut read = Duration::ZERO;
    let mut kernel = Duration::ZERO;
    let mut voxels = 0u64;
    println!("file,overall_ms,disk_read_ms,kernel_ms");
    for path in &files {
        let t = Instant::now();
        let result = compute_file(path, &a.volume, &workers).and_then(|(ecc, _, report)| {
            let stem = path.file_stem().unwrap_or_default();
            let out = out_dir.join(stem).with_extension(ext);
            curve::write_curve(&ecc, a.volume.format, File::create(&out)?)?;
            Ok(report)
        });
        match result {
            Ok(report) => {
                read += report.disk_read;
                kernel += report.kernel;
                voxels += report.voxels;
                println!(
                    "{},{:.3},{:.3},{:.3}",
                    path.display(),
                    ms(t.elapsed()),
                    ms(report.disk_read),
                    ms(report.kernel)
                );
            }
            Err(failure) => {
                failures += 1;
                let msg = match failure {
                    Failure::Usage(msg) => msg,
                    Failure::Run(e) => e.to_string(),
                };
                let name = path.display().to_string();
                if msg.starts_with(&name) {
                    eprintln!("error: {msg}");
                } else {
                    eprintln!("error: {name}: {msg}");
                }
            }
        }
    }
    let n = files.len() as u32;
    let total = t0.elapsed();
    eprintln!("{:<22}{}", "files", files.len());
    eprintln!("{:<22}{failures}", "failed");
    eprintln!("{:<22}{:.3}", "overall [ms]", ms(total));
    eprintln!("{:<22}{:.3}", "overall avg [ms]", ms(total / n));
    eprintln!("{:<22}{:.3}", "disk read avg [ms]", ms(read / n));
    eprintln!("{:<22}{:.4}", "kernel GVox/s", gvox_per_s(voxels, kernel));
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_gen(a: &GenArgs) -> std::result::Result<ExitCode, Failure> {
    let dims = Dims::from_slice(&a.dims).map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = GenSpec {
        dims,
        seed: a.seed,
        kind: a.kind,
        sigma: a.sigma,
        levels: a.levels,
        value_kind: a.dtype,
    };
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let t = Instant::now();
    let image = datagen::generate(&spec)?;
    let endian = if a.big_endian { Endian::Big } else { Endian::Little };
    grid::write_raw(&image, &a.output, endian)?;
    grid::write_sidecar(&a.output, dims, image.kind())?;
    eprintln!(
        "wrote {} ({} {}, {} bytes) in {:.3} ms",
        a.output.display(),
        dims,
        image.kind(),
        image.byte_len(),
        ms(t.elapsed())
    );
    Ok(ExitCode::SUCCESS)
}

/// Per-iteration averages of the smoothing + ECC pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub iters: u64,
    pub voxels: u64,
    /// Image generation, paid once.
    pub setup: Duration,
    /// Everything, setup included.
    pub overall: Duration,
    pub gaussian: Duration,
    /// Index build and kernel.
    pub ecc_exec: Duration,
    /// Merge into the global VCEC and the prefix sum.
    pub ecc_mem: Duration,
    pub last_curve_len: usize,
}

impl BenchReport {
    pub fn overall_avg(&self) -> Duration {
        self.overall / self.iters as u32
    }

    fn avg(&self, d: Duration) -> f64 {
        ms(d) / self.iters as f64
    }
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<24}{}", "iterations", self.iters)?;
        writeln!(f, "{:<24}{:.3}", "overall [ms]", ms(self.overall))?;
        writeln!(f, "{:<24}{:.3}", "overall avg [ms]", ms(self.overall) / self.iters as f64)?;
        writeln!(f, "{:<24}{:.3}", "ECC mem avg [ms]", self.avg(self.ecc_mem))?;
        writeln!(f, "{:<24}{:.3}", "ECC exec avg [ms]", self.avg(self.ecc_exec))?;
        writeln!(f, "{:<24}{:.3}", "Gaussian exec avg [ms]", self.avg(self.gaussian))?;
        writeln!(f, "{:<24}{:.3}", "setup [ms]", ms(self.setup))?;
        write!(
            f,
            "{:<24}{:.4}",
            "ECC kernel GVox/s",
            gvox_per_s(self.voxels * self.iters, self.ecc_exec)
        )
    }
}

/// Generates one image, then repeats {smooth; ECC} `iters` times, each
/// step smoothing the previous result.
pub fn run_bench(
    spec: &GenSpec,
    iters: u64,
    sigma: f64,
    width: usize,
    workers: &Workers,
    chunks: usize,
) -> Result<BenchReport> {
    let t0 = Instant::now();
    let mut image: Image = datagen::generate(spec)?;
    let setup = t0.elapsed();
    let plan = engine::plan_chunks(spec.dims, ValueKind::F32, ChunkTarget::Count(chunks))?;
    let mut report = BenchReport {
        iters,
        voxels: spec.dims.voxel_count() as u64,
        setup,
        overall: Duration::ZERO,
        gaussian: Duration::ZERO,
        ecc_exec: Duration::ZERO,
        ecc_mem: Duration::ZERO,
        last_curve_len: 0,
    };
    for _ in 0..iters {
        let t = Instant::now();
        image = workers.run(|_| datagen::gaussian_smooth(&image, sigma, width))?;
        report.gaussian += t.elapsed();

        let (vcec, stats) = engine::image_vcec_with(&image, &plan, workers, &EngineOptions::default())?;
        let t = Instant::now();
        let ecc = curve::vcec_to_ecc(&vcec)?;
        report.ecc_mem += stats.merge_time() + t.elapsed();
        report.ecc_exec += stats.index_time() + stats.kernel_time();
        report.last_curve_len = ecc.len();
    }
    report.overall = t0.elapsed();
    Ok(report)
}

fn cmd_bench(a: &BenchArgs) -> std::result::Result<ExitCode, Failure> {
    let dims = Dims::from_slice(&a.size).map_err(|e| Failure::Usage(e.to_string()))?;
    if a.width.is_multiple_of(2) {
        return Err(Failure::Usage(Error::BadKernelWidth(a.width).to_string()));
    }
    let workers = make_workers(a.workers)?;
    let mut spec = match a.kind {
        GenKind::Uniform => GenSpec::uniform(dims, a.seed),
        GenKind::Grf => GenSpec::grf(dims, a.seed, 4.0),
    };
    spec.value_kind = a.dtype;
    if a.dtype == ValueKind::U8 && a.kind == GenKind::Grf {
        spec.levels = 256;
    }
    let chunks = a.chunks.unwrap_or(workers.count().max(2));
    let report = run_bench(&spec, a.iters, a.sigma, a.width, &workers, chunks)?;
    println!("{report}");
    Ok(ExitCode::SUCCESS)
}
