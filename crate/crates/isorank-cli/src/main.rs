//! Command-line driver: generate synthetic instances, run the ranking
//! procedure, reconstruct matrices, sweep rate grids, and run the
//! concentration Monte Carlo.
//!
//! Flags may also be given in a TOML config file of flat `key = value` pairs
//! whose keys are the long flag names (for example `n = 32`,
//! `grid = "geometric"`, `lambda = [0.5, 1.0]`); command-line flags override
//! file values. Usage errors exit with code 2; runtime failures exit with
//! code 1 and a machine-readable JSON object on stderr.

use clap::{Args, Parser, Subcommand, ValueEnum};
use isorank::bench::{concentration_check, rate_sweep, SweepConfig, SweepFamily, SweepPoint};
use isorank::error::Error;
use isorank::io;
use isorank::isr::{
    build_grid, practical_preset, run_isr, GridKind, IsrConfig, PRACTICAL_SCALE_C0,
};
use isorank::reconstruct::{reconstruct_biso, reconstruct_iso, RateScale, ReconstructConfig};
use isorank::rng::splitmix64;
use isorank::sampling::{
    poissonize, subsample_batches, NoiseModel, ObservationStream, SignalInstance,
};
use isorank::synth::{
    gen_isotonic, gen_lower_bound, gen_separated, gen_toy_three_block, hard_preset, Family,
    HardRegime,
};
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "isorank",
    version,
    about = "Ranking and reconstruction for noisy, partially observed matrices with isotonic columns"
)]
struct Cli {
    /// TOML file of flat key = value pairs matching long flag names;
    /// command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic instance (and optionally an observation stream).
    Generate(GenerateArgs),
    /// Run the iterative ranking procedure and print a run manifest.
    RunIsr(RunArgs),
    /// Estimate the matrix: rank, reorder, and project.
    Reconstruct(ReconstructArgs),
    /// Sweep a grid of (n, d, lambda) points and tabulate losses.
    Sweep(SweepArgs),
    /// Monte Carlo check of the masked-Gram operator-norm concentration.
    Concentration(ConcArgs),
    /// Run the ranking procedure and dump the final comparison graph as
    /// JSON lines.
    DumpGraph(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    UniformSorted,
    Block,
    Smooth,
    Separated,
    LowerBound,
    Toy,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepFamilyArg {
    LowerBound,
    UniformSorted,
    Separated,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridArg {
    Arithmetic,
    Geometric,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Iso,
    Biso,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RateScaleArg {
    Displayed,
    SplitAdjusted,
    CountNormalized,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StreamFormatArg {
    Json,
    Binary,
}

/// Shared instance-shaping flags.
#[derive(Args)]
struct ShapeArgs {
    /// Number of experts (rows). The toy family ignores this.
    #[arg(long)]
    n: Option<usize>,
    /// Number of questions (columns). The toy family ignores this.
    #[arg(long)]
    d: Option<usize>,
    /// Expected observations per cell.
    #[arg(long)]
    lambda: Option<f64>,
    /// Master seed; every random choice is derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Instance family used when no input file is given.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Observation noise attached to sampled values.
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
}

/// Shared ranking-configuration flags.
#[derive(Args)]
struct RankerFlags {
    /// Number of ranking steps (the practical preset chooses one otherwise).
    #[arg(long = "T", value_name = "STEPS")]
    t_steps: Option<usize>,
    /// Threshold grid shape.
    #[arg(long, value_enum)]
    grid: Option<GridArg>,
    /// Replaces the calibrated multiplier in the grid separation
    /// `scale * sqrt(ln(n d / delta))`.
    #[arg(long)]
    grid_scale: Option<f64>,
    /// Failure-probability parameter of the threshold grid.
    #[arg(long)]
    delta: Option<f64>,
    /// Per-run wall-clock budget in seconds.
    #[arg(long)]
    deadline: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Block count for the block family.
    #[arg(long)]
    blocks: Option<usize>,
    /// Base level of the toy family.
    #[arg(long)]
    alpha: Option<f64>,
    /// Gap of the toy family.
    #[arg(long)]
    h: Option<f64>,
    /// Strip length of the lower-bound prior (defaults to the hard preset).
    #[arg(long)]
    p: Option<usize>,
    /// Questions per elevated strip (defaults to the hard preset).
    #[arg(long)]
    q: Option<usize>,
    /// Elevation of the lower-bound prior (defaults to the hard preset).
    #[arg(long)]
    upsilon: Option<f64>,
    /// Instance document destination (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Also sample an observation stream to this path.
    #[arg(long, value_name = "PATH")]
    stream_out: Option<PathBuf>,
    /// Format of the sampled stream file.
    #[arg(long, value_enum)]
    stream_format: Option<StreamFormatArg>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    ranker: RankerFlags,
    /// Input file: an instance document, a stream document, or a binary
    /// stream. A fresh instance is generated when omitted.
    #[arg(long = "in", value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output destination (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write a JSON-lines pass trace to this path.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Column structure assumed by the estimator.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Normalization of the empirical matrices built from split streams.
    #[arg(long, value_enum)]
    rate_scale: Option<RateScaleArg>,
    /// Convergence tolerance of the alternating-projection solver.
    #[arg(long)]
    dykstra_tol: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Row counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Column counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// Sampling rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Instance family of the sweep.
    #[arg(long, value_enum)]
    family: Option<SweepFamilyArg>,
    /// Replicates per grid point.
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Observation noise.
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// Per-run wall-clock budget in seconds.
    #[arg(long)]
    deadline: Option<f64>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Output destination (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConcArgs {
    /// Matrix heights, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    /// Matrix widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    q: Option<Vec<usize>>,
    /// Bernoulli mask rate in (0, 1].
    #[arg(long)]
    sigma2: Option<f64>,
    /// Monte Carlo replicates per (p, q) pair.
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output destination (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Error plumbing
// ---------------------------------------------------------------------------

enum CliError {
    Usage(String),
    Runtime(String, &'static str),
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::InvalidInstance(_) => "invalid-instance",
        Error::InvalidConfig(_) => "invalid-config",
        Error::InvalidGrid(_) => "invalid-grid",
        Error::CyclicGraph => "cyclic-graph",
        Error::Generator(_) => "generator",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string(), error_code(&e))
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string(), "io")
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits 0 for --help/--version and 2 for usage errors.
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg, code)) => {
            let doc = serde_json::json!({
                "schema": io::SCHEMA,
                "kind": "error",
                "code": code,
                "message": msg,
            });
            eprintln!("{doc}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Generate(args) => cmd_generate(args, &file),
        Cmd::RunIsr(args) => cmd_run_isr(args, &file, false),
        Cmd::DumpGraph(args) => cmd_run_isr(args, &file, true),
        Cmd::Reconstruct(args) => cmd_reconstruct(args, &file),
        Cmd::Sweep(args) => cmd_sweep(args, &file),
        Cmd::Concentration(args) => cmd_concentration(args, &file),
    }
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig {
                table: toml::Table::new(),
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(FileConfig { table })
    }

    fn usize_v(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(bad_key(key, "a nonnegative integer", v)),
        }
    }

    fn u64_v(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(bad_key(key, "a nonnegative integer", v)),
        }
    }

    fn f64_v(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(bad_key(key, "a number", v)),
        }
    }

    fn path_v(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(v) => Err(bad_key(key, "a string path", v)),
        }
    }

    fn enum_v<E: ValueEnum + Clone>(&self, key: &str) -> Result<Option<E>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => E::from_str(s, true)
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}"))),
            Some(v) => Err(bad_key(key, "a string", v)),
        }
    }

    fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(vec![*i as usize])),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(bad_key(key, "nonnegative integers", other)),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(v) => Err(bad_key(key, "an integer or integer array", v)),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.table.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(vec![*x])),
            Some(toml::Value::Integer(i)) => Ok(Some(vec![*i as f64])),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    other => Err(bad_key(key, "numbers", other)),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(v) => Err(bad_key(key, "a number or number array", v)),
        }
    }
}

fn bad_key(key: &str, want: &str, got: &toml::Value) -> CliError {
    CliError::Usage(format!(
        "config key {key:?} must be {want}, got {}",
        got.type_str()
    ))
}

// ---------------------------------------------------------------------------
// Shared resolution
// ---------------------------------------------------------------------------

struct Shape {
    n: usize,
    d: usize,
    lambda: f64,
    seed: u64,
    family: FamilyArg,
    noise: NoiseModel,
}

fn resolve_shape(
    args: &ShapeArgs,
    file: &FileConfig,
    default_family: FamilyArg,
    defaults: (usize, usize, f64),
) -> Result<Shape, CliError> {
    let noise = match args.noise.or(file.enum_v::<NoiseArg>("noise")?) {
        Some(NoiseArg::Bernoulli) => NoiseModel::Bernoulli,
        _ => NoiseModel::Gaussian,
    };
    Ok(Shape {
        n: args.n.or(file.usize_v("n")?).unwrap_or(defaults.0),
        d: args.d.or(file.usize_v("d")?).unwrap_or(defaults.1),
        lambda: args.lambda.or(file.f64_v("lambda")?).unwrap_or(defaults.2),
        seed: args.seed.or(file.u64_v("seed")?).unwrap_or(0),
        family: args
            .family
            .or(file.enum_v("family")?)
            .unwrap_or(default_family),
        noise,
    })
}

struct Ranker {
    t_steps: Option<usize>,
    grid: GridKind,
    grid_scale: Option<f64>,
    delta: Option<f64>,
    deadline: Option<f64>,
}

fn resolve_ranker(args: &RankerFlags, file: &FileConfig) -> Result<Ranker, CliError> {
    Ok(Ranker {
        t_steps: args.t_steps.or(file.usize_v("T")?),
        grid: match args.grid.or(file.enum_v("grid")?) {
            Some(GridArg::Geometric) => GridKind::Geometric,
            _ => GridKind::Arithmetic,
        },
        grid_scale: args.grid_scale.or(file.f64_v("grid-scale")?),
        delta: args.delta.or(file.f64_v("delta")?),
        deadline: args.deadline.or(file.f64_v("deadline")?),
    })
}

fn build_isr_config(n: usize, d: usize, ranker: &Ranker) -> Result<IsrConfig, CliError> {
    let mut config = practical_preset(n, d, ranker.delta)?;
    if ranker.grid != GridKind::Arithmetic || ranker.grid_scale.is_some() {
        let delta = ranker.delta.unwrap_or(1.0 / ((n * d) as f64).powi(2));
        let c0 = ranker.grid_scale.unwrap_or(PRACTICAL_SCALE_C0);
        let sep = c0 * ((n * d) as f64 / delta).ln().sqrt();
        config.grid = build_grid(ranker.grid, n, d, delta, Some(sep), None)?;
    }
    if let Some(t) = ranker.t_steps {
        if t == 0 {
            return Err(CliError::Usage("T must be at least 1".into()));
        }
        config.t_steps = t;
    }
    if let Some(secs) = ranker.deadline {
        if !(secs.is_finite() && secs > 0.0) {
            return Err(CliError::Usage("deadline must be a positive number".into()));
        }
        config.deadline = Some(Duration::from_secs_f64(secs));
    }
    Ok(config)
}

/// Guarantees only hold for sampling rates in `[1/d, 8 n^2]`; outside that
/// range runs proceed with a warning.
fn warn_lambda(n: usize, d: usize, lambda: f64) {
    let lo = 1.0 / d as f64;
    let hi = 8.0 * (n as f64) * (n as f64);
    if !(lo..=hi).contains(&lambda) {
        eprintln!(
            "warning: lambda = {lambda} outside the supported range [{lo}, {hi}] for n={n}, d={d}"
        );
    }
}

struct LowerBoundExtras {
    p: Option<usize>,
    q: Option<usize>,
    upsilon: Option<f64>,
    blocks: usize,
    alpha: f64,
    h: f64,
}

impl LowerBoundExtras {
    fn defaults() -> Self {
        LowerBoundExtras {
            p: None,
            q: None,
            upsilon: None,
            blocks: 4,
            alpha: 0.5,
            h: 0.25,
        }
    }
}

fn make_instance(shape: &Shape, extras: &LowerBoundExtras) -> Result<SignalInstance, CliError> {
    let inst = match shape.family {
        FamilyArg::UniformSorted => gen_isotonic(
            shape.n,
            shape.d,
            Family::UniformSorted,
            shape.lambda,
            shape.seed,
        )?,
        FamilyArg::Block => gen_isotonic(
            shape.n,
            shape.d,
            Family::Block {
                blocks: extras.blocks,
            },
            shape.lambda,
            shape.seed,
        )?,
        FamilyArg::Smooth => gen_isotonic(shape.n, shape.d, Family::Smooth, shape.lambda, shape.seed)?,
        FamilyArg::Separated => gen_separated(shape.n, shape.d, shape.lambda, shape.seed)?,
        FamilyArg::Toy => gen_toy_three_block(extras.alpha, extras.h, shape.lambda)?,
        FamilyArg::LowerBound => {
            let params = match (extras.p, extras.q, extras.upsilon) {
                (None, None, None) => {
                    hard_preset(HardRegime::Main, shape.n, shape.d, shape.lambda)?
                }
                (Some(p), Some(q), Some(upsilon)) => isorank::synth::HardParams { p, q, upsilon },
                _ => {
                    return Err(CliError::Usage(
                        "give all of --p, --q, --upsilon or none of them".into(),
                    ))
                }
            };
            let (inst, _prior) = gen_lower_bound(
                shape.n,
                shape.d,
                shape.lambda,
                params.p,
                params.q,
                params.upsilon,
                shape.seed,
            )?;
            inst
        }
    };
    Ok(inst)
}

/// Either a bare stream or a stream paired with its generating instance.
struct RunInput {
    stream: ObservationStream,
    truth: Option<SignalInstance>,
}

fn load_or_generate(
    input: Option<&Path>,
    shape: &Shape,
    extras: &LowerBoundExtras,
) -> Result<RunInput, CliError> {
    match input {
        None => {
            let inst = make_instance(shape, extras)?;
            warn_lambda(inst.n(), inst.d(), inst.lambda);
            let stream = poissonize(&inst, shape.noise, splitmix64(shape.seed ^ 0x0B5))?;
            Ok(RunInput {
                stream,
                truth: Some(inst),
            })
        }
        Some(path) => {
            let bytes = std::fs::read(path).map_err(io_err)?;
            if bytes.starts_with(&io::STREAM_MAGIC) {
                let stream = io::read_stream_binary(bytes.as_slice())?;
                warn_lambda(stream.n, stream.d, stream.lambda);
                return Ok(RunInput {
                    stream,
                    truth: None,
                });
            }
            let text = String::from_utf8(bytes)
                .map_err(|e| CliError::Runtime(e.to_string(), "format"))?;
            let peek: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Runtime(e.to_string(), "json"))?;
            match peek.get("kind").and_then(|k| k.as_str()) {
                Some("instance") => {
                    let inst = io::parse_instance(&text)?;
                    warn_lambda(inst.n(), inst.d(), inst.lambda);
                    let stream = poissonize(&inst, shape.noise, splitmix64(shape.seed ^ 0x0B5))?;
                    Ok(RunInput {
                        stream,
                        truth: Some(inst),
                    })
                }
                Some("stream") => {
                    let stream = io::parse_stream(&text)?;
                    warn_lambda(stream.n, stream.d, stream.lambda);
                    Ok(RunInput {
                        stream,
                        truth: None,
                    })
                }
                other => Err(CliError::Runtime(
                    format!("input document kind {other:?} is not an instance or stream"),
                    "format",
                )),
            }
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, body).map_err(io_err),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn resolve_extras(args: &GenerateArgs, file: &FileConfig) -> Result<LowerBoundExtras, CliError> {
    let defaults = LowerBoundExtras::defaults();
    Ok(LowerBoundExtras {
        p: args.p.or(file.usize_v("p")?),
        q: args.q.or(file.usize_v("q")?),
        upsilon: args.upsilon.or(file.f64_v("upsilon")?),
        blocks: args
            .blocks
            .or(file.usize_v("blocks")?)
            .unwrap_or(defaults.blocks),
        alpha: args.alpha.or(file.f64_v("alpha")?).unwrap_or(defaults.alpha),
        h: args.h.or(file.f64_v("h")?).unwrap_or(defaults.h),
    })
}

fn cmd_generate(args: GenerateArgs, file: &FileConfig) -> Result<(), CliError> {
    let shape = resolve_shape(&args.shape, file, FamilyArg::UniformSorted, (32, 32, 1.0))?;
    let extras = resolve_extras(&args, file)?;
    let inst = make_instance(&shape, &extras)?;
    warn_lambda(inst.n(), inst.d(), inst.lambda);
    let out = args.out.or(file.path_v("out")?);
    emit(out.as_deref(), &io::instance_json(&inst))?;

    let stream_out = args.stream_out.or(file.path_v("stream-out")?);
    if let Some(path) = stream_out {
        let stream = poissonize(&inst, shape.noise, splitmix64(shape.seed ^ 0x0B5))?;
        let format = args
            .stream_format
            .or(file.enum_v("stream-format")?)
            .unwrap_or(StreamFormatArg::Json);
        match format {
            StreamFormatArg::Json => emit(Some(&path), &io::stream_json(&stream))?,
            StreamFormatArg::Binary => {
                let fh = std::fs::File::create(&path).map_err(io_err)?;
                let mut buf = std::io::BufWriter::new(fh);
                io::write_stream_binary(&stream, &mut buf)?;
                use std::io::Write as _;
                buf.flush().map_err(io_err)?;
            }
        }
    }
    Ok(())
}

fn cmd_run_isr(args: RunArgs, file: &FileConfig, dump: bool) -> Result<(), CliError> {
    let shape = resolve_shape(&args.shape, file, FamilyArg::Separated, (16, 16, 4.0))?;
    let ranker = resolve_ranker(&args.ranker, file)?;
    let input_path = args.input.or(file.path_v("in")?);
    let input = load_or_generate(input_path.as_deref(), &shape, &LowerBoundExtras::defaults())?;
    let config = build_isr_config(input.stream.n, input.stream.d, &ranker)?;
    let batched = subsample_batches(
        &input.stream,
        config.t_steps,
        splitmix64(shape.seed ^ 0x0BA7),
    )?;

    let trace_path = args.trace.or(file.path_v("trace")?);
    let mut trace_log = match &trace_path {
        Some(path) => {
            let fh = std::fs::File::create(path).map_err(io_err)?;
            Some(io::TraceLog::new(std::io::BufWriter::new(fh)))
        }
        None => None,
    };

    let outcome = {
        let mut sink = trace_log
            .as_mut()
            .map(|log| |ev: &isorank::slr::TraceEvent| log.record(ev));
        match &mut sink {
            Some(f) => run_isr(&batched, &config, Some(f))?,
            None => run_isr(&batched, &config, None)?,
        }
    };
    if let Some(log) = trace_log {
        log.finish()?;
    }

    let out = args.out.or(file.path_v("out")?);
    if dump {
        let mut buf = Vec::new();
        io::dump_graph_jsonl(&outcome.weights, &mut buf)?;
        let text = String::from_utf8(buf).map_err(|e| CliError::Runtime(e.to_string(), "format"))?;
        emit(out.as_deref(), &text)
    } else {
        let loss = input
            .truth
            .as_ref()
            .map(|inst| isorank::bench::permutation_loss(&inst.m, &inst.pi_star, &outcome.pi_hat));
        let manifest = io::run_manifest(&config, shape.seed, &outcome, loss);
        emit(out.as_deref(), &io::manifest_json(&manifest))
    }
}

fn cmd_reconstruct(args: ReconstructArgs, file: &FileConfig) -> Result<(), CliError> {
    let shape = resolve_shape(&args.run.shape, file, FamilyArg::Separated, (16, 16, 4.0))?;
    let ranker = resolve_ranker(&args.run.ranker, file)?;
    let input_path = args.run.input.or(file.path_v("in")?);
    let input = load_or_generate(input_path.as_deref(), &shape, &LowerBoundExtras::defaults())?;

    let isr = build_isr_config(input.stream.n, input.stream.d, &ranker)?;
    let mut config = ReconstructConfig::new(isr, splitmix64(shape.seed ^ 0x5EC0));
    config.rate_scale = match args.rate_scale.or(file.enum_v("rate-scale")?) {
        Some(RateScaleArg::SplitAdjusted) => RateScale::SplitAdjusted,
        Some(RateScaleArg::CountNormalized) => RateScale::CountNormalized,
        _ => RateScale::Displayed,
    };
    if let Some(tol) = args.dykstra_tol.or(file.f64_v("dykstra-tol")?) {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CliError::Usage("dykstra-tol must be positive".into()));
        }
        config.dykstra_tol = tol;
    }
    let mode = args.mode.or(file.enum_v("mode")?).unwrap_or(ModeArg::Iso);

    let (fit, m_hat) = match mode {
        ModeArg::Iso => {
            let reco = reconstruct_iso(&input.stream, &config)?;
            (reco.fit, reco.m_hat)
        }
        ModeArg::Biso => {
            let reco = reconstruct_biso(&input.stream, &config)?;
            (reco.fit, reco.m_hat)
        }
    };

    let out = args.run.out.or(file.path_v("out")?);
    let loss_reco = input.truth.as_ref().map(|inst| {
        (&m_hat - &inst.m).iter().map(|x| x * x).sum::<f64>()
    });
    emit(out.as_deref(), &io::fit_json(&fit))?;
    if out.is_some() {
        let summary = serde_json::json!({
            "schema": io::SCHEMA,
            "kind": "reconstruct-summary",
            "mode": match mode { ModeArg::Iso => "iso", ModeArg::Biso => "biso" },
            "n": input.stream.n,
            "d": input.stream.d,
            "lambda": input.stream.lambda,
            "seed": shape.seed,
            "objective": fit.objective,
            "converged": fit.converged,
            "loss_reco": loss_reco,
        });
        println!("{summary}");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, file: &FileConfig) -> Result<(), CliError> {
    let ns = args.n.or(file.usize_list("n")?).unwrap_or_else(|| vec![32]);
    let ds = args.d.or(file.usize_list("d")?).unwrap_or_else(|| vec![32]);
    let lambdas = args
        .lambda
        .or(file.f64_list("lambda")?)
        .unwrap_or_else(|| vec![1.0]);
    if ns.is_empty() || ds.is_empty() || lambdas.is_empty() {
        return Err(CliError::Usage("empty sweep axis".into()));
    }
    let family = match args.family.or(file.enum_v("family")?) {
        None | Some(SweepFamilyArg::LowerBound) => SweepFamily::LowerBound,
        Some(SweepFamilyArg::UniformSorted) => SweepFamily::UniformSorted,
        Some(SweepFamilyArg::Separated) => SweepFamily::Separated,
    };
    let noise = match args.noise.or(file.enum_v::<NoiseArg>("noise")?) {
        Some(NoiseArg::Bernoulli) => NoiseModel::Bernoulli,
        _ => NoiseModel::Gaussian,
    };
    let deadline = match args.deadline.or(file.f64_v("deadline")?) {
        Some(secs) if secs.is_finite() && secs > 0.0 => Some(Duration::from_secs_f64(secs)),
        Some(_) => return Err(CliError::Usage("deadline must be a positive number".into())),
        None => None,
    };
    let mut points = Vec::new();
    for &n in &ns {
        for &d in &ds {
            for &lambda in &lambdas {
                warn_lambda(n, d, lambda);
                points.push(SweepPoint { n, d, lambda });
            }
        }
    }
    let config = SweepConfig {
        family,
        points,
        replicates: args.replicates.or(file.usize_v("replicates")?).unwrap_or(20),
        seed: args.seed.or(file.u64_v("seed")?).unwrap_or(0),
        per_run_deadline: deadline,
        noise,
    };
    let report = rate_sweep(&config);
    let out = args.out.or(file.path_v("out")?);
    match args.format.or(file.enum_v("format")?).unwrap_or(FormatArg::Csv) {
        FormatArg::Csv => {
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            emit(out.as_deref(), &io::csv_string(&report.rows)?)
        }
        FormatArg::Json => emit(out.as_deref(), &io::report_json(&report)),
    }
}

fn cmd_concentration(args: ConcArgs, file: &FileConfig) -> Result<(), CliError> {
    let ps = args.p.or(file.usize_list("p")?).unwrap_or_else(|| vec![16]);
    let qs = args
        .q
        .or(file.usize_list("q")?)
        .unwrap_or_else(|| vec![4096]);
    let sigma2 = args.sigma2.or(file.f64_v("sigma2")?).unwrap_or(0.05);
    if !(sigma2 > 0.0 && sigma2 <= 1.0) {
        return Err(CliError::Usage("sigma2 must lie in (0, 1]".into()));
    }
    if ps.iter().any(|&p| p == 0) || qs.iter().any(|&q| q == 0) {
        return Err(CliError::Usage("p and q must be positive".into()));
    }
    let replicates = args
        .replicates
        .or(file.usize_v("replicates")?)
        .unwrap_or(200);
    let seed = args.seed.or(file.u64_v("seed")?).unwrap_or(0);
    let mut summaries = Vec::new();
    for &p in &ps {
        for &q in &qs {
            summaries.push(concentration_check(p, q, sigma2, replicates, seed));
        }
    }
    let doc = serde_json::json!({
        "schema": io::SCHEMA,
        "kind": "concentration",
        "summaries": summaries,
    });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Runtime(e.to_string(), "json"))?;
    let out = args.out.or(file.path_v("out")?);
    emit(out.as_deref(), &text)
}
