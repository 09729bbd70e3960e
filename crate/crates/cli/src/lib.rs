//! Command implementations behind the `driftlab` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use driftlab::datasets::{sample_data, sample_noise, ToySpec};
use driftlab::diagnostics::{battery, CheckRecord};
use driftlab::io::{read_samples_csv, write_atomic, write_samples_csv};
use driftlab::metrics::{evaluate, MetricReport};
use driftlab::render::{Bounds, Canvas, RenderSummary, DATA_COLOR, GENERATED_COLOR};
use driftlab::rng::{streams, Stream};
use driftlab::trainer::{resume_run, train_run, Checkpoint, RunConfig};
use driftlab::{KernelShape, SampleBatch};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "driftlab", version, about = "Train and inspect drifting / lookahead-drifting generators on 2D toy data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a generator from a TOML run configuration.
    Train(TrainArgs),
    /// Print distribution metrics of a checkpoint against fresh data.
    Eval(EvalArgs),
    /// Write generated samples from a checkpoint as CSV.
    Sample(SampleArgs),
    /// Run the numerical diagnostics battery.
    Diag(DiagArgs),
    /// Rasterize generated and data points into a PPM image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `--set plan.k=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset kind to compare against; defaults to the checkpoint's dataset.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Number of generated and of data samples.
    #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    pub projections: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use live parameters instead of the EMA shadow.
    #[arg(long)]
    pub live: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub live: bool,
}

#[derive(Debug, Args)]
pub struct DiagArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Batch sizes of the seeded instances.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 4, 64, 256])]
    pub sizes: Vec<usize>,
    /// Use exp(+d/τ) instead of exp(−d/τ) to show which checks depend on locality.
    #[arg(long)]
    pub wrong_sign_kernel: bool,
    /// Also write the records to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// CSV of generated points (drawn in red).
    #[arg(long, conflicts_with = "checkpoint")]
    pub samples: Option<PathBuf>,
    /// Generate points from this checkpoint instead of reading a CSV.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CSV of data points (drawn in blue, underneath).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Points to generate (and data points to draw) with `--checkpoint`.
    #[arg(long, default_value_t = 2048, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Plot window as xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = vec![-3.0, 3.0, -3.0, 3.0], allow_negative_numbers = true)]
    pub bounds: Vec<f64>,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
}

/// Process exit status of a completed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ChecksFailed,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Diag(a) => cmd_diag(&a, out),
        Command::Render(a) => cmd_render(&a, out),
    }
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    if !path.exists() {
        bail!("config not found: {}", path.display());
    }
    Ok(RunConfig::load(path, overrides)?)
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<Outcome> {
    let config = load_config(&args.config, &args.overrides)?;
    let outcome = match &args.resume {
        Some(ckpt) => resume_run(&config, ckpt)?,
        None => train_run(&config)?,
    };
    writeln!(out, "{}", config.output_dir.display())?;
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "step {}: energy_distance={:.4e} sliced_w1={:.4e}",
            last.step, last.energy_distance, last.sliced_w1
        );
    }
    Ok(Outcome::Success)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Generated points from a checkpoint, noise drawn from `seed`'s noise stream.
pub fn generate(ckpt: &Checkpoint, count: usize, seed: u64, live: bool) -> Result<SampleBatch> {
    let params = if live { &ckpt.state.params } else { ckpt.state.ema.shadow() };
    let noise = sample_noise(params.noise_dim(), count, &mut Stream::derived(seed, streams::NOISE))?;
    Ok(params.forward(&noise)?)
}

/// Metrics of a checkpoint's generator against fresh data. Generated noise,
/// data and projection directions come from the noise, data and metrics
/// streams of `seed`.
pub fn eval_checkpoint(
    ckpt: &Checkpoint,
    dataset: &ToySpec,
    n: usize,
    projections: usize,
    seed: u64,
    live: bool,
) -> Result<MetricReport> {
    let generated = generate(ckpt, n, seed, live)?;
    let data = sample_data(dataset, n, &mut Stream::derived(seed, streams::DATA))?;
    Ok(evaluate(&generated, &data, projections, &mut Stream::derived(seed, streams::METRICS))?)
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<Outcome> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dataset = match &args.dataset {
        Some(kind) => ToySpec::from_kind(kind)?,
        None => ckpt.config.dataset.clone(),
    };
    let report = eval_checkpoint(&ckpt, &dataset, args.n as usize, args.projections as usize, args.seed, args.live)?;
    let record = json!({
        "checkpoint_step": ckpt.state.step,
        "dataset": dataset.kind(),
        "seed": args.seed,
        "params": if args.live { "live" } else { "ema" },
        "energy_distance": report.energy_distance,
        "sliced_w1": report.sliced_w1,
        "projections": report.projections,
        "generated": report.generated,
        "reference": report.reference,
    });
    writeln!(out, "{record}")?;
    Ok(Outcome::Success)
}

pub fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> Result<Outcome> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let points = generate(&ckpt, args.count as usize, args.seed, args.live)?;
    write_samples_csv(&args.out, &points)?;
    writeln!(out, "{}", args.out.display())?;
    Ok(Outcome::Success)
}

pub fn cmd_diag(args: &DiagArgs, out: &mut dyn Write) -> Result<Outcome> {
    if args.sizes.is_empty() || args.sizes.contains(&0) {
        bail!("--sizes must list positive batch sizes");
    }
    let kernel = if args.wrong_sign_kernel { KernelShape::Growing } else { KernelShape::Decaying };
    let records = battery(args.seed, &args.sizes, kernel)?;
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    if let Some(path) = &args.out {
        write_atomic(path, text.as_bytes())?;
    }
    let failed: Vec<&CheckRecord> = records.iter().filter(|r| !r.passed).collect();
    if failed.is_empty() {
        Ok(Outcome::Success)
    } else {
        for r in &failed {
            eprintln!("FAILED {} [{}]: {:e} > {:e}", r.check, r.instance, r.value, r.tolerance);
        }
        Ok(Outcome::ChecksFailed)
    }
}

fn read_points(path: &Path) -> Result<Option<SampleBatch>> {
    read_samples_csv(path).with_context(|| format!("reading {}", path.display()))
}

pub fn cmd_render(args: &RenderArgs, out: &mut dyn Write) -> Result<Outcome> {
    let bounds = Bounds {
        xmin: args.bounds[0],
        xmax: args.bounds[1],
        ymin: args.bounds[2],
        ymax: args.bounds[3],
    };
    let mut canvas = Canvas::new(args.resolution, bounds)?;

    let (generated, data) = match &args.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let n = args.count as usize;
            let generated = generate(&ckpt, n, args.seed, false)?;
            let data = match &args.data {
                Some(p) => read_points(p)?,
                None => Some(sample_data(&ckpt.config.dataset, n, &mut Stream::derived(args.seed, streams::DATA))?),
            };
            (Some(generated), data)
        }
        None => {
            let generated = match &args.samples {
                Some(p) => read_points(p)?,
                None => None,
            };
            let data = match &args.data {
                Some(p) => read_points(p)?,
                None => None,
            };
            (generated, data)
        }
    };
    if let Some(d) = &data {
        canvas.draw(d, DATA_COLOR)?;
    }
    if let Some(g) = &generated {
        canvas.draw(g, GENERATED_COLOR)?;
    }
    write_atomic(&args.out, &canvas.to_ppm())?;
    let RenderSummary { drawn, clipped } = canvas.summary();
    writeln!(out, "{}", json!({ "image": args.out, "drawn": drawn, "clipped": clipped }))?;
    Ok(Outcome::Success)
}
