//! Training loop: noise → generator → drift target → regression step.
//!
//! A run is fully determined by its [`RunConfig`]. Four random streams are
//! derived from the run seed (init, noise, data, metrics), so evaluation
//! never perturbs the training trajectory, and a checkpoint (parameters,
//! optimizer, EMA, step counter and stream states) resumes a run bit for bit.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::datasets::{sample_data, sample_noise, ToySpec};
use crate::drift::DriftConfig;
use crate::error::{Error, Result};
use crate::generator::{adam_step, Activation, AdamConfig, EmaParams, GeneratorParams, OptimizerState};
use crate::io::write_atomic;
use crate::lookahead::{lookahead_trace, standard_target, LookaheadPlan};
use crate::metrics::{evaluate, MetricReport};
use crate::rng::{streams, Stream};

/// How the regression target is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Staged lookahead target driven by `plan`.
    #[default]
    Lookahead,
    /// Single drift `f + V(f)`; `plan` is ignored.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: u64,
    pub method: Method,
    pub noise_dim: usize,
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size_model: usize,
    pub batch_size_data: usize,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub eval_size: usize,
    pub eval_projections: usize,
    /// Evaluate the EMA parameters rather than the live ones.
    pub eval_ema: bool,
    pub ema_decay: f64,
    /// Record elapsed seconds in the metrics log (makes logs run-dependent).
    pub log_wallclock: bool,
    pub output_dir: PathBuf,
    pub dataset: ToySpec,
    pub plan: LookaheadPlan,
    pub drift: DriftConfig,
    pub optimizer: AdamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 20_000,
            method: Method::Lookahead,
            noise_dim: 2,
            data_dim: 2,
            hidden: vec![256, 256, 256],
            activation: Activation::Silu,
            batch_size_model: 256,
            batch_size_data: 256,
            eval_every: 1000,
            checkpoint_every: 5000,
            eval_size: 4096,
            eval_projections: crate::metrics::DEFAULT_PROJECTIONS,
            eval_ema: true,
            ema_decay: 0.999,
            log_wallclock: true,
            output_dir: PathBuf::from("runs/default"),
            dataset: ToySpec::default(),
            plan: LookaheadPlan::uniform(1),
            drift: DriftConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("steps", self.steps as usize),
            ("noise_dim", self.noise_dim),
            ("data_dim", self.data_dim),
            ("batch_size_model", self.batch_size_model),
            ("batch_size_data", self.batch_size_data),
            ("eval_every", self.eval_every as usize),
            ("checkpoint_every", self.checkpoint_every as usize),
            ("eval_projections", self.eval_projections),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name}: must be at least 1")));
            }
        }
        if self.eval_size < 2 {
            return Err(Error::Config("eval_size: must be at least 2".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden: layer widths must be positive".into()));
        }
        if self.data_dim != 2 {
            return Err(Error::Config(format!(
                "data_dim: toy datasets are two-dimensional, got {}",
                self.data_dim
            )));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!("ema_decay: must lie in [0, 1), got {}", self.ema_decay)));
        }
        self.dataset.validate()?;
        self.plan.validate()?;
        self.drift.validate()?;
        self.optimizer.validate()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.noise_dim];
        s.extend(&self.hidden);
        s.push(self.data_dim);
        s
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            // toml appends its own "in `path`" line; the path is already in front.
            let inner = e.into_inner().to_string();
            let message = inner.lines().next().unwrap_or_default().to_string();
            Error::Config(format!("{path}: {message}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML config and applies `dotted.key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }
}

/// Applies one `dotted.key=value` assignment to a TOML tree. The value is
/// parsed as a TOML literal when possible and taken as a string otherwise.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override {assignment:?} has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut node = root;
    let mut segments = key.split('.').peekable();
    while let Some(seg) = segments.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {seg:?} is inside a non-table value")))?;
        if segments.peek().is_none() {
            table.insert(seg.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("key has at least one segment")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub params: GeneratorParams,
    pub optimizer: OptimizerState,
    pub ema: EmaParams,
    pub noise_stream: Stream,
    pub data_stream: Stream,
    pub metrics_stream: Stream,
    /// Step telemetry accumulated since the last evaluation.
    pub window: TelemetryWindow,
}

/// Running sums of loss and per-stage drift norms over the steps since the
/// last evaluation. Stored in checkpoints so resumed runs log the same means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetryWindow {
    pub steps: u64,
    pub loss_sum: f64,
    pub drift_norm_sums: Vec<f64>,
}

impl TelemetryWindow {
    pub fn push(&mut self, record: &StepRecord) {
        if self.drift_norm_sums.len() != record.drift_norms.len() {
            self.drift_norm_sums = vec![0.0; record.drift_norms.len()];
        }
        self.steps += 1;
        self.loss_sum += record.loss;
        for (acc, n) in self.drift_norm_sums.iter_mut().zip(&record.drift_norms) {
            *acc += n;
        }
    }

    /// Mean loss and mean drift norms over the window, then resets it.
    pub fn take_means(&mut self) -> (f64, Vec<f64>) {
        let n = self.steps.max(1) as f64;
        let means = (self.loss_sum / n, self.drift_norm_sums.iter().map(|s| s / n).collect());
        *self = Self::default();
        means
    }
}

impl TrainState {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mut init = Stream::derived(config.seed, streams::INIT);
        let params = GeneratorParams::init(&config.layer_sizes(), config.activation, &mut init)?;
        Ok(Self {
            step: 0,
            optimizer: OptimizerState::new(config.optimizer, params.len()),
            ema: EmaParams::new(config.ema_decay, &params)?,
            params,
            noise_stream: Stream::derived(config.seed, streams::NOISE),
            data_stream: Stream::derived(config.seed, streams::DATA),
            metrics_stream: Stream::derived(config.seed, streams::METRICS),
            window: TelemetryWindow::default(),
        })
    }

    /// Shape consistency between parameters, optimizer moments, EMA and config.
    pub fn check_consistent(&self, config: &RunConfig) -> Result<()> {
        let sizes = config.layer_sizes();
        let fail = |field: &str, msg: String| Err(Error::Checkpoint(format!("{field}: {msg}")));
        if self.params.sizes() != sizes.as_slice() {
            return fail("state.params.sizes", format!("{:?} does not match config {:?}", self.params.sizes(), sizes));
        }
        let n = self.params.len();
        if let Err(e) =
            GeneratorParams::from_values(self.params.sizes(), self.params.activation(), self.params.values().to_vec())
        {
            return fail("state.params.values", e.to_string());
        }
        if self.optimizer.first_moment.len() != n {
            return fail("state.optimizer.first_moment", format!("length {} != {n}", self.optimizer.first_moment.len()));
        }
        if self.optimizer.second_moment.len() != n {
            return fail("state.optimizer.second_moment", format!("length {} != {n}", self.optimizer.second_moment.len()));
        }
        let shadow = self.ema.shadow();
        if shadow.sizes() != self.params.sizes() || shadow.len() != n {
            return fail("state.ema.shadow", "shape does not match parameters".into());
        }
        if !(0.0..1.0).contains(&self.ema.decay()) {
            return fail("state.ema.decay", format!("{} outside [0, 1)", self.ema.decay()));
        }
        Ok(())
    }

    pub fn eval_params<'a>(&'a self, config: &RunConfig) -> &'a GeneratorParams {
        if config.eval_ema {
            self.ema.shadow()
        } else {
            &self.params
        }
    }
}

/// Telemetry of one optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: f64,
    /// Batch-mean drift norm of every stage.
    pub drift_norms: Vec<f64>,
}

/// Builds the detached target for a generated batch and reports per-stage
/// drift norms.
pub fn build_target(
    outputs: &SampleBatch,
    positives: &SampleBatch,
    config: &RunConfig,
) -> Result<(SampleBatch, Vec<f64>)> {
    match config.method {
        Method::Lookahead => {
            let trace = lookahead_trace(outputs, positives, &config.plan, &config.drift)?;
            let norms = trace.stage_norms();
            Ok((trace.target, norms))
        }
        Method::Standard => {
            let (target, field) = standard_target(outputs, positives, &config.drift)?;
            Ok((target, vec![field.mean_norm()]))
        }
    }
}

/// One optimization step. On failure the state is left exactly as it was.
pub fn train_step(state: &mut TrainState, config: &RunConfig) -> Result<StepRecord> {
    let noise_snapshot = state.noise_stream.clone();
    let data_snapshot = state.data_stream.clone();
    match try_step(state, config) {
        Ok(r) => Ok(r),
        Err(e) => {
            state.noise_stream = noise_snapshot;
            state.data_stream = data_snapshot;
            Err(match e {
                Error::TrainingDiverged { .. } => e,
                other => Error::TrainingDiverged {
                    step: state.step + 1,
                    reason: other.to_string(),
                },
            })
        }
    }
}

fn try_step(state: &mut TrainState, config: &RunConfig) -> Result<StepRecord> {
    let step = state.step + 1;
    let noise = sample_noise(config.noise_dim, config.batch_size_model, &mut state.noise_stream)?;
    let cache = state.params.forward_cached(&noise)?;
    let positives = sample_data(&config.dataset, config.batch_size_data, &mut state.data_stream)?;
    let (target, drift_norms) = build_target(cache.output(), &positives, config)?;
    let (loss, grads) = state.params.backward(&cache, &target)?;
    if !loss.is_finite() || drift_norms.iter().any(|n| !n.is_finite()) {
        return Err(Error::TrainingDiverged {
            step,
            reason: format!("non-finite loss {loss} or drift norms {drift_norms:?}"),
        });
    }
    adam_step(&mut state.params, &grads, &mut state.optimizer).map_err(|e| match e {
        Error::TrainingDiverged { reason, .. } => Error::TrainingDiverged { step, reason },
        other => other,
    })?;
    state.ema.update(&state.params)?;
    state.step = step;
    Ok(StepRecord { step, loss, drift_norms })
}

/// Metrics of the evaluation parameters against fresh data, drawn from the
/// metrics stream.
pub fn evaluate_state(state: &mut TrainState, config: &RunConfig) -> Result<MetricReport> {
    let noise = sample_noise(config.noise_dim, config.eval_size, &mut state.metrics_stream)?;
    let generated = state.eval_params(config).forward(&noise)?;
    let data = sample_data(&config.dataset, config.eval_size, &mut state.metrics_stream)?;
    evaluate(&generated, &data, config.eval_projections, &mut state.metrics_stream)
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    /// Mean loss over the steps since the previous evaluation.
    pub loss: f64,
    /// Per-stage drift norms averaged over the same steps.
    pub drift_norms: Vec<f64>,
    /// Loss and drift norms of the evaluation step's own batch.
    pub step_loss: f64,
    pub step_drift_norms: Vec<f64>,
    pub energy_distance: f64,
    pub sliced_w1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wallclock: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub state: TrainState,
}

pub const CHECKPOINT_FORMAT: &str = "driftlab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(config: &RunConfig, state: &TrainState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            state: state.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let ckpt: Checkpoint = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Checkpoint(format!("{path}: {}", e.into_inner()))
        })?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("format: expected {CHECKPOINT_FORMAT:?}, got {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version: unsupported version {}", ckpt.version)));
        }
        ckpt.config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        ckpt.state.check_consistent(&ckpt.config)?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn checkpoint_path(output_dir: &Path, step: u64) -> PathBuf {
    output_dir.join("checkpoints").join(format!("step-{step:08}.json"))
}

pub fn metrics_log_path(output_dir: &Path) -> PathBuf {
    output_dir.join("metrics.jsonl")
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::invalid(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn write_metrics_log(path: &Path, log: &[MetricRecord]) -> Result<()> {
    let mut text = String::new();
    for r in log {
        text.push_str(&serde_json::to_string(r).expect("metric record serializes"));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: TrainState,
    pub log: Vec<MetricRecord>,
}

/// Runs a fresh training run, writing the metrics log and checkpoints under
/// `config.output_dir`.
pub fn train_run(config: &RunConfig) -> Result<RunOutcome> {
    let state = TrainState::new(config)?;
    run_from(config, state, Vec::new())
}

/// Continues a run from a checkpoint up to `config.steps`. Metric records
/// past the checkpoint step are dropped from the existing log.
pub fn resume_run(config: &RunConfig, checkpoint: &Path) -> Result<RunOutcome> {
    let ckpt = Checkpoint::load(checkpoint)?;
    ckpt.state.check_consistent(config)?;
    let log_path = metrics_log_path(&config.output_dir);
    let mut log = if log_path.exists() {
        read_metrics_log(&log_path)?
    } else {
        Vec::new()
    };
    log.retain(|r| r.step <= ckpt.state.step);
    run_from(config, ckpt.state, log)
}

fn run_from(config: &RunConfig, mut state: TrainState, mut log: Vec<MetricRecord>) -> Result<RunOutcome> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("config.toml"), config.to_toml_string().as_bytes())?;
    let log_path = metrics_log_path(dir);
    let started = Instant::now();

    while state.step < config.steps {
        let record = match train_step(&mut state, config) {
            Ok(r) => r,
            Err(e) => {
                Checkpoint::new(config, &state).save(&dir.join("checkpoints").join("last-good.json"))?;
                let diag = serde_json::json!({
                    "step": state.step + 1,
                    "last_good_step": state.step,
                    "error": e.to_string(),
                });
                write_atomic(&dir.join("diverged.json"), diag.to_string().as_bytes())?;
                return Err(e);
            }
        };
        state.window.push(&record);
        if state.step.is_multiple_of(config.eval_every) {
            let m = evaluate_state(&mut state, config)?;
            let (loss, drift_norms) = state.window.take_means();
            log.push(MetricRecord {
                step: record.step,
                loss,
                drift_norms,
                step_loss: record.loss,
                step_drift_norms: record.drift_norms,
                energy_distance: m.energy_distance,
                sliced_w1: m.sliced_w1,
                wallclock: config.log_wallclock.then(|| started.elapsed().as_secs_f64()),
            });
            write_metrics_log(&log_path, &log)?;
        }
        if state.step.is_multiple_of(config.checkpoint_every) {
            Checkpoint::new(config, &state).save(&checkpoint_path(dir, state.step))?;
        }
    }
    Ok(RunOutcome { state, log })
}
