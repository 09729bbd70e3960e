//! Laplace-kernel drift fields.
//!
//! The drift at a query point `x` is the difference of two kernel-weighted
//! mean shifts: toward the positive samples (attraction) and toward the
//! negative samples (repulsion),
//!
//! ```text
//! V(x) = (Σ k(x,y⁺) y⁺ / Σ k(x,y⁺) − x) − (Σ k(x,y⁻) y⁻ / Σ k(x,y⁻) − x)
//! k(x,y) = exp(−‖x − y‖₂ / τ)
//! ```
//!
//! Each weighted mean is evaluated as a softmax over the log-weights
//! `−‖x − y‖/τ`, optionally shifted by their maximum so that small
//! temperatures do not underflow. Swapping the positive and negative batches
//! negates the field exactly, and identical batches give an exactly zero
//! field.
//!
//! Note on the kernel sign: the decaying form `exp(−d/τ)` is the default.
//! A growing form `exp(+d/τ)` is available through [`KernelShape::Growing`]
//! only so the diagnostics can show what breaks without locality.

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    /// `exp(−‖x−y‖/τ)`.
    #[default]
    Decaying,
    /// `exp(+‖x−y‖/τ)`; no locality, diagnostic use only.
    Growing,
}

impl KernelShape {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            KernelShape::Decaying => -1.0,
            KernelShape::Growing => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// Kernel temperatures; per-temperature fields are averaged uniformly.
    #[serde(rename = "tau", with = "one_or_many")]
    pub taus: Vec<f64>,
    /// Keep a query that also appears in the negative batch among the negatives.
    #[serde(default = "default_true")]
    pub include_self: bool,
    /// Subtract the max log-weight before exponentiating.
    #[serde(default = "default_true")]
    pub stab_shift: bool,
    #[serde(default)]
    pub kernel: KernelShape,
}

fn default_true() -> bool {
    true
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            taus: vec![1.0],
            include_self: true,
            stab_shift: true,
            kernel: KernelShape::Decaying,
        }
    }
}

impl DriftConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            taus: vec![tau],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(Error::Config("drift.tau: at least one temperature required".into()));
        }
        if let Some(t) = self.taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Config(format!(
                "drift.tau: temperatures must be finite and positive, got {t}"
            )));
        }
        Ok(())
    }
}

mod one_or_many {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(t) => vec![t],
            OneOrMany::Many(v) => v,
        })
    }
}

/// One drift vector per query row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    vectors: SampleBatch,
}

impl DriftField {
    pub fn vectors(&self) -> &SampleBatch {
        &self.vectors
    }

    pub fn into_batch(self) -> SampleBatch {
        self.vectors
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i)
    }

    pub fn rows(&self) -> usize {
        self.vectors.rows()
    }

    /// Batch mean of the per-row Euclidean norms.
    pub fn mean_norm(&self) -> f64 {
        let total: f64 = self.vectors.iter_rows().map(norm).sum();
        total / self.vectors.rows() as f64
    }
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_point(p: &[f64], what: &str) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} has a non-finite coordinate")))
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be finite and positive, got {tau}")))
    }
}

/// `exp(−‖x−y‖₂/τ)`; in (0, 1], equal to 1 exactly when `x == y`.
pub fn laplace_kernel(x: &[f64], y: &[f64], tau: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "kernel arguments differ in dimension: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    check_point(x, "kernel argument x")?;
    check_point(y, "kernel argument y")?;
    check_tau(tau)?;
    Ok((-distance(x, y) / tau).exp())
}

/// Kernel-weighted mean of `batch` seen from `query` with the default
/// (decaying, max-shifted) kernel.
pub fn weighted_mean(query: &[f64], batch: &SampleBatch, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let cfg = DriftConfig::with_tau(tau);
    let mut scratch = Scratch::default();
    let mut out = vec![0.0; batch.dim()];
    mean_shift_into(query, batch, &cfg, false, &mut scratch, &mut out)?;
    for (o, q) in out.iter_mut().zip(query) {
        *o += q;
    }
    Ok(out)
}

/// Attraction toward the positive samples: weighted mean minus the query.
pub fn attraction(query: &[f64], positives: &SampleBatch, cfg: &DriftConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut scratch = Scratch::default();
    let mut out = vec![0.0; positives.dim()];
    mean_shift_into(query, positives, cfg, false, &mut scratch, &mut out)?;
    Ok(out)
}

/// Repulsion from the negative samples, honoring `include_self`.
pub fn repulsion(query: &[f64], negatives: &SampleBatch, cfg: &DriftConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut scratch = Scratch::default();
    let mut out = vec![0.0; negatives.dim()];
    mean_shift_into(query, negatives, cfg, !cfg.include_self, &mut scratch, &mut out)?;
    Ok(out)
}

/// Drift field `attraction(xᵢ) − repulsion(xᵢ)` for every query row.
pub fn drift(
    queries: &SampleBatch,
    positives: &SampleBatch,
    negatives: &SampleBatch,
    cfg: &DriftConfig,
) -> Result<DriftField> {
    cfg.validate()?;
    let dim = queries.dim();
    if positives.dim() != dim || negatives.dim() != dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: queries {dim}, positives {}, negatives {}",
            positives.dim(),
            negatives.dim()
        )));
    }
    let mut scratch = Scratch::default();
    let mut attract = vec![0.0; dim];
    let mut repel = vec![0.0; dim];
    let mut out = Vec::with_capacity(queries.rows() * dim);
    for x in queries.iter_rows() {
        mean_shift_into(x, positives, cfg, false, &mut scratch, &mut attract)?;
        mean_shift_into(x, negatives, cfg, !cfg.include_self, &mut scratch, &mut repel)?;
        out.extend(attract.iter().zip(&repel).map(|(a, r)| a - r));
    }
    Ok(DriftField {
        vectors: SampleBatch::new(queries.rows(), dim, out)?,
    })
}

#[derive(Default)]
struct Scratch {
    dist: Vec<f64>,
    weights: Vec<f64>,
    acc: Vec<f64>,
}

/// Writes the temperature-averaged `mean − query` into `out`.
fn mean_shift_into(
    query: &[f64],
    batch: &SampleBatch,
    cfg: &DriftConfig,
    exclude_query: bool,
    scratch: &mut Scratch,
    out: &mut [f64],
) -> Result<()> {
    let dim = batch.dim();
    if query.len() != dim {
        return Err(Error::invalid(format!(
            "query has dimension {}, batch has {dim}",
            query.len()
        )));
    }
    check_point(query, "query")?;

    scratch.dist.clear();
    let mut kept = 0usize;
    for y in batch.iter_rows() {
        if exclude_query && y == query {
            scratch.dist.push(f64::NAN);
        } else {
            scratch.dist.push(distance(query, y));
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::invalid(
            "no samples left in batch after excluding the query point",
        ));
    }

    let sign = cfg.kernel.sign();
    out.iter_mut().for_each(|o| *o = 0.0);
    scratch.acc.resize(dim, 0.0);
    for &tau in &cfg.taus {
        scratch.weights.clear();
        let mut max_logw = f64::NEG_INFINITY;
        for &d in &scratch.dist {
            let lw = if d.is_nan() { f64::NEG_INFINITY } else { sign * d / tau };
            max_logw = max_logw.max(lw);
            scratch.weights.push(lw);
        }
        let shift = if cfg.stab_shift { max_logw } else { 0.0 };
        let mut total = 0.0;
        scratch.acc.iter_mut().for_each(|a| *a = 0.0);
        for (w, y) in scratch.weights.iter_mut().zip(batch.iter_rows()) {
            *w = (*w - shift).exp();
            total += *w;
            for (a, v) in scratch.acc.iter_mut().zip(y) {
                *a += *w * v;
            }
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid(format!(
                "kernel weights are not normalizable at tau={tau} (sum={total}); enable stab_shift"
            )));
        }
        for ((o, a), q) in out.iter_mut().zip(&scratch.acc).zip(query) {
            *o += a / total - q;
        }
    }
    if cfg.taus.len() > 1 {
        let n = cfg.taus.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
    Ok(())
}
