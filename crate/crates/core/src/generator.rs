//! Fully-connected generator `noise → data` with hand-written reverse-mode
//! gradients for the squared-distance regression loss, an Adam optimizer and
//! an exponential moving average of the parameters.
//!
//! All parameters live in one flat vector. Layer `l` maps `sizes[l]` inputs
//! to `sizes[l+1]` outputs and stores a row-major `in × out` weight matrix
//! followed by its bias. Hidden layers apply the activation; the output layer
//! is linear.

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// `x · sigmoid(x)`.
    #[default]
    Silu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
}

fn spans(sizes: &[usize]) -> Vec<LayerSpan> {
    let mut offset = 0;
    sizes
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                fan_in: w[0],
                fan_out: w[1],
                weight: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            span
        })
        .collect()
}

fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    sizes: Vec<usize>,
    activation: Activation,
    values: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    /// Input to every layer; `inputs[0]` is the noise.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    output: SampleBatch,
}

impl ForwardCache {
    pub fn output(&self) -> &SampleBatch {
        &self.output
    }
}

/// `c = a · b` (or `c += a · b` with `accumulate`), with explicit strides so
/// transposed operands need no copies.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the kernel touches; c is
    // row-major m×n and uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl GeneratorParams {
    /// Fan-in scaled uniform initialization: every weight and bias of a layer
    /// with `fan_in` inputs is drawn from `U(−1/√fan_in, 1/√fan_in)`, layer by
    /// layer, weights before biases.
    pub fn init(sizes: &[usize], activation: Activation, stream: &mut Stream) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let mut values = Vec::with_capacity(parameter_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                values.push(bound * (2.0 * stream.uniform() - 1.0));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            values,
        })
    }

    pub fn from_values(sizes: &[usize], activation: Activation, values: Vec<f64>) -> Result<Self> {
        Self::check_sizes(sizes)?;
        let expected = parameter_count(sizes);
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} parameters for layer sizes {sizes:?}, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter value"));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            values,
        })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must have at least two positive entries, got {sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn noise_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn data_dim(&self) -> usize {
        *self.sizes.last().expect("validated sizes")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weight matrix of layer `l` (row-major `in × out`) and its bias.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = spans(&self.sizes)[l];
        (
            &self.values[s.weight..s.bias],
            &self.values[s.bias..s.bias + s.fan_out],
        )
    }

    pub fn forward(&self, noise: &SampleBatch) -> Result<SampleBatch> {
        Ok(self.forward_cached(noise)?.output)
    }

    pub fn forward_cached(&self, noise: &SampleBatch) -> Result<ForwardCache> {
        if noise.dim() != self.noise_dim() {
            return Err(Error::invalid(format!(
                "noise has dimension {}, generator expects {}",
                noise.dim(),
                self.noise_dim()
            )));
        }
        let rows = noise.rows();
        let layers = spans(&self.sizes);
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut current = noise.as_slice().to_vec();
        for (l, s) in layers.iter().enumerate() {
            let bias = &self.values[s.bias..s.bias + s.fan_out];
            let mut z = Vec::with_capacity(rows * s.fan_out);
            for _ in 0..rows {
                z.extend_from_slice(bias);
            }
            gemm(
                rows,
                s.fan_in,
                s.fan_out,
                &current,
                (s.fan_in, 1),
                &self.values[s.weight..s.bias],
                (s.fan_out, 1),
                &mut z,
                true,
            );
            if l < last {
                let a: Vec<f64> = z.iter().map(|&v| self.activation.apply(v)).collect();
                inputs.push(std::mem::replace(&mut current, a));
                pre.push(z);
            } else {
                inputs.push(std::mem::replace(&mut current, z));
            }
        }
        let output = SampleBatch::new(rows, self.data_dim(), current)
            .map_err(|_| Error::invalid("generator produced a non-finite output"))?;
        Ok(ForwardCache {
            rows,
            inputs,
            pre,
            output,
        })
    }

    /// Gradient of `(1/B) Σ ‖f(εᵢ) − tᵢ‖²` for the cached forward pass. The
    /// target is a constant: it enters only through the residual.
    pub fn backward(&self, cache: &ForwardCache, target: &SampleBatch) -> Result<(f64, Vec<f64>)> {
        cache.output.check_same_shape(target)?;
        let rows = cache.rows;
        let scale = 2.0 / rows as f64;
        let residual: Vec<f64> = cache
            .output
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(f, t)| f - t)
            .collect();
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / rows as f64;

        let layers = spans(&self.sizes);
        let mut grads = vec![0.0; self.values.len()];
        let mut delta: Vec<f64> = residual.iter().map(|r| scale * r).collect();
        for (l, s) in layers.iter().enumerate().rev() {
            let input = &cache.inputs[l];
            // dW = inputᵀ · delta
            gemm(
                s.fan_in,
                rows,
                s.fan_out,
                input,
                (1, s.fan_in),
                &delta,
                (s.fan_out, 1),
                &mut grads[s.weight..s.bias],
                false,
            );
            let db = &mut grads[s.bias..s.bias + s.fan_out];
            for row in delta.chunks_exact(s.fan_out) {
                for (g, d) in db.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                // d(input) = delta · Wᵀ, then through the activation.
                let mut upstream = vec![0.0; rows * s.fan_in];
                gemm(
                    rows,
                    s.fan_out,
                    s.fan_in,
                    &delta,
                    (s.fan_out, 1),
                    &self.values[s.weight..s.bias],
                    (1, s.fan_out),
                    &mut upstream,
                    false,
                );
                for (u, z) in upstream.iter_mut().zip(&cache.pre[l - 1]) {
                    *u *= self.activation.derivative(*z);
                }
                delta = upstream;
            }
        }
        Ok((loss, grads))
    }

    pub fn loss_and_grad(&self, noise: &SampleBatch, target: &SampleBatch) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward_cached(noise)?;
        self.backward(&cache, target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    #[serde(default = "AdamConfig::default_lr")]
    pub lr: f64,
    #[serde(default = "AdamConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamConfig::default_eps")]
    pub eps: f64,
}

impl AdamConfig {
    fn default_lr() -> f64 {
        1e-3
    }
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps.is_finite()
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("optimizer: invalid Adam settings {self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: Self::default_lr(),
            beta1: Self::default_beta1(),
            beta2: Self::default_beta2(),
            eps: Self::default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient entry
/// is non-finite.
pub fn adam_step(params: &mut GeneratorParams, grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    if grads.len() != params.len()
        || state.first_moment.len() != params.len()
        || state.second_moment.len() != params.len()
    {
        return Err(Error::invalid(format!(
            "optimizer shape mismatch: {} parameters, {} gradients, {}/{} moments",
            params.len(),
            grads.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged {
            step: state.step,
            reason: format!("non-finite gradient at parameter {i}"),
        });
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .values
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaParams {
    decay: f64,
    shadow: GeneratorParams,
}

impl EmaParams {
    pub fn new(decay: f64, params: &GeneratorParams) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::invalid(format!("EMA decay must lie in [0, 1), got {decay}")));
        }
        Ok(Self {
            decay,
            shadow: params.clone(),
        })
    }

    pub fn with_shadow(decay: f64, shadow: GeneratorParams) -> Result<Self> {
        let mut e = Self::new(decay, &shadow)?;
        e.shadow = shadow;
        Ok(e)
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn shadow(&self) -> &GeneratorParams {
        &self.shadow
    }

    /// `shadow ← decay·shadow + (1 − decay)·params`.
    pub fn update(&mut self, params: &GeneratorParams) -> Result<()> {
        if params.sizes != self.shadow.sizes {
            return Err(Error::invalid(format!(
                "EMA shape mismatch: {:?} vs {:?}",
                self.shadow.sizes, params.sizes
            )));
        }
        let d = self.decay;
        for (s, p) in self.shadow.values.iter_mut().zip(&params.values) {
            *s = d * *s + (1.0 - d) * p;
        }
        Ok(())
    }
}
