//! Numerical checks of the structural identities behind lookahead drifting.
//!
//! [`verify_rewrite`] evaluates the stage-1 drift at a pushed-forward query
//! along two routes. The direct route drifts the whole batch once and calls
//! [`drift`] again. The rewritten route never calls [`drift`]: it recomputes
//! the kernel sums inline, pushes every negative forward explicitly as
//! `y⁻ + V⁺(y⁻) − V⁻(y⁻)`, and splits the stage-1 repulsion into a position
//! part (kernel-weighted `y⁻`) and the extra term (kernel-weighted
//! displacements `V⁺(y⁻) − V⁻(y⁻)`).

use serde::Serialize;

use crate::batch::SampleBatch;
use crate::drift::{drift, distance, DriftConfig, KernelShape};
use crate::error::{Error, Result};
use crate::lookahead::{lookahead_target, lookahead_trace, standard_target, LookaheadPlan};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub query_index: usize,
    /// Stage-1 drift at the pushed-forward query, via two `drift` calls.
    pub direct: Vec<f64>,
    /// Same quantity from the inline pushed-forward expansion.
    pub rewritten: Vec<f64>,
    /// Kernel-weighted positive mean at the pushed-forward query.
    pub attraction_part: Vec<f64>,
    /// Kernel-weighted mean of the un-displaced negatives.
    pub position_part: Vec<f64>,
    /// Kernel-weighted mean of the negatives' stage-0 displacements.
    pub extra_term: Vec<f64>,
    /// Stage-0 drift at the raw query.
    pub baseline_drift: Vec<f64>,
    /// `‖direct − rewritten‖∞`.
    pub max_abs_gap: f64,
    /// `‖(attraction_part − rewritten) − (position_part + extra_term)‖∞`.
    pub split_gap: f64,
}

/// Normalized kernel average of `rows` seen from `query`, one temperature.
/// Rows bitwise equal to the query are skipped when `exclude_query` is set.
fn kernel_average(
    query: &[f64],
    rows: &[Vec<f64>],
    tau: f64,
    shape: KernelShape,
    exclude_query: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sign = match shape {
        KernelShape::Decaying => -1.0,
        KernelShape::Growing => 1.0,
    };
    let logw: Vec<Option<f64>> = rows
        .iter()
        .map(|y| (!(exclude_query && y.as_slice() == query)).then(|| sign * distance(query, y) / tau))
        .collect();
    let top = logw
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::invalid("no samples left after excluding the query"));
    }
    let raw: Vec<f64> = logw
        .iter()
        .map(|lw| lw.map_or(0.0, |lw| (lw - top).exp()))
        .collect();
    let z: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let mut mean = vec![0.0; query.len()];
    for (p, y) in probs.iter().zip(rows) {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += p * v;
        }
    }
    Ok((mean, probs))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn scale_in_place(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

fn add_in_place(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

pub fn verify_rewrite(
    query_index: usize,
    outputs: &SampleBatch,
    positives: &SampleBatch,
    cfg: &DriftConfig,
) -> Result<DecompositionReport> {
    cfg.validate()?;
    if query_index >= outputs.rows() {
        return Err(Error::invalid(format!(
            "query index {query_index} out of range for {} rows",
            outputs.rows()
        )));
    }
    if outputs.dim() != positives.dim() {
        return Err(Error::invalid("outputs and positives differ in dimension"));
    }
    let dim = outputs.dim();
    let exclude = !cfg.include_self;
    let n_tau = cfg.taus.len() as f64;

    // Direct route.
    let stage0 = drift(outputs, positives, outputs, cfg)?;
    let batch1 = outputs.add(stage0.vectors())?;
    let query1 = SampleBatch::from_rows(&[batch1.row(query_index)])?;
    let direct = drift(&query1, positives, &batch1, cfg)?.row(0).to_vec();

    // Rewritten route.
    let pos: Vec<Vec<f64>> = positives.iter_rows().map(<[f64]>::to_vec).collect();
    let neg: Vec<Vec<f64>> = outputs.iter_rows().map(<[f64]>::to_vec).collect();

    // Stage-0 displacement V⁺(y⁻) − V⁻(y⁻) of every negative.
    let mut displacement = Vec::with_capacity(neg.len());
    for y in &neg {
        let mut d = vec![0.0; dim];
        for &tau in &cfg.taus {
            let (mp, _) = kernel_average(y, &pos, tau, cfg.kernel, false)?;
            let (mn, _) = kernel_average(y, &neg, tau, cfg.kernel, exclude)?;
            add_in_place(&mut d, &sub(&sub(&mp, y), &sub(&mn, y)));
        }
        scale_in_place(&mut d, 1.0 / n_tau);
        displacement.push(d);
    }
    let pushed: Vec<Vec<f64>> = neg
        .iter()
        .zip(&displacement)
        .map(|(y, d)| y.iter().zip(d).map(|(a, b)| a + b).collect())
        .collect();
    let f1 = pushed[query_index].clone();

    let mut rewritten = vec![0.0; dim];
    let mut attraction_part = vec![0.0; dim];
    let mut position_part = vec![0.0; dim];
    let mut extra_term = vec![0.0; dim];
    let mut baseline = vec![0.0; dim];
    for &tau in &cfg.taus {
        let (attract, _) = kernel_average(&f1, &pos, tau, cfg.kernel, false)?;
        let (repel, probs) = kernel_average(&f1, &pushed, tau, cfg.kernel, exclude)?;
        add_in_place(&mut rewritten, &sub(&attract, &repel));
        add_in_place(&mut attraction_part, &attract);
        for ((p, y), d) in probs.iter().zip(&neg).zip(&displacement) {
            for c in 0..dim {
                position_part[c] += p * y[c];
                extra_term[c] += p * d[c];
            }
        }
        let x0 = &neg[query_index];
        let (mp0, _) = kernel_average(x0, &pos, tau, cfg.kernel, false)?;
        let (mn0, _) = kernel_average(x0, &neg, tau, cfg.kernel, exclude)?;
        add_in_place(&mut baseline, &sub(&mp0, &mn0));
    }
    for v in [
        &mut rewritten,
        &mut attraction_part,
        &mut position_part,
        &mut extra_term,
        &mut baseline,
    ] {
        scale_in_place(v, 1.0 / n_tau);
    }

    let repulsion_total = sub(&attraction_part, &rewritten);
    let split: Vec<f64> = position_part.iter().zip(&extra_term).map(|(a, b)| a + b).collect();
    Ok(DecompositionReport {
        query_index,
        max_abs_gap: max_abs_diff(&direct, &rewritten),
        split_gap: max_abs_diff(&repulsion_total, &split),
        direct,
        rewritten,
        attraction_part,
        position_part,
        extra_term,
        baseline_drift: baseline,
    })
}

/// Largest per-query distance between the stage-1 drift at the pushed-forward
/// batch and the stage-0 drift at the raw batch.
pub fn drift_divergence(
    outputs: &SampleBatch,
    positives: &SampleBatch,
    cfg: &DriftConfig,
) -> Result<f64> {
    let trace = lookahead_trace(outputs, positives, &LookaheadPlan::uniform(1), cfg)?;
    let v0 = &trace.stages[0].drift;
    let v1 = &trace.stages[1].drift;
    Ok((0..v0.rows())
        .map(|i| distance(v0.row(i), v1.row(i)))
        .fold(0.0, f64::max))
}

/// One line of the diagnostics battery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub instance: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckRecord {
    fn at_most(check: &str, instance: String, value: f64, tolerance: f64) -> Self {
        Self {
            check: check.to_string(),
            instance,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

pub const ANTISYMMETRY_TOL: f64 = 1e-12;
pub const REWRITE_TOL: f64 = 1e-10;
pub const REDUCTION_TOL: f64 = 1e-12;

fn gaussian_batch(stream: &mut Stream, rows: usize, dim: usize, shift: f64, scale: f64) -> SampleBatch {
    let mut data = vec![0.0; rows * dim];
    stream.fill_normal(&mut data);
    data.iter_mut().for_each(|v| *v = shift + scale * *v);
    SampleBatch::new(rows, dim, data).expect("finite gaussian batch")
}

/// Runs the seeded diagnostics battery over the given batch sizes.
///
/// Checks: anti-symmetry, fixed point (drift and lookahead target), rewrite
/// identity, repulsion split, k=0 reduction, and kernel locality. Locality is
/// the only check that depends on the kernel shape.
pub fn battery(seed: u64, sizes: &[usize], kernel: KernelShape) -> Result<Vec<CheckRecord>> {
    let mut stream = Stream::new(seed);
    let mut out = Vec::new();
    let dims = [1usize, 2, 8];
    let taus = [0.1, 1.0, 10.0];

    for &rows in sizes {
        for &dim in &dims {
            for &tau in &taus {
                let cfg = DriftConfig { kernel, ..DriftConfig::with_tau(tau) };
                let inst = format!("B={rows},d={dim},tau={tau}");
                let x = gaussian_batch(&mut stream, rows, dim, 0.0, 1.5);
                let p = gaussian_batch(&mut stream, rows, dim, 0.7, 1.0);
                let n = gaussian_batch(&mut stream, rows, dim, -0.3, 1.2);

                let fwd = drift(&x, &p, &n, &cfg)?;
                let bwd = drift(&x, &n, &p, &cfg)?;
                let gap = fwd.vectors().add(bwd.vectors())?.max_abs();
                out.push(CheckRecord::at_most("antisymmetry", inst.clone(), gap, ANTISYMMETRY_TOL));

                let fixed = drift(&x, &p, &p.clone(), &cfg)?.vectors().max_abs();
                let mut worst_target = 0.0_f64;
                for k in [0usize, 1, 3] {
                    let t = lookahead_target(&p, &p, &LookaheadPlan::uniform(k), &cfg)?;
                    worst_target = worst_target.max(t.add_scaled(&p, -1.0)?.max_abs());
                }
                out.push(CheckRecord::at_most("fixed-point", inst.clone(), fixed.max(worst_target), 0.0));

                let q_idx = (stream.below(rows as u64)) as usize;
                let report = verify_rewrite(q_idx, &n, &p, &cfg)?;
                out.push(CheckRecord::at_most("rewrite-identity", inst.clone(), report.max_abs_gap, REWRITE_TOL));
                out.push(CheckRecord::at_most("repulsion-split", inst.clone(), report.split_gap, REWRITE_TOL));

                let reduced = lookahead_target(&n, &p, &LookaheadPlan::uniform(0), &cfg)?;
                let (standard, _) = standard_target(&n, &p, &cfg)?;
                let gap = reduced.add_scaled(&standard, -1.0)?.max_abs();
                out.push(CheckRecord::at_most("k0-reduction", inst, gap, REDUCTION_TOL));
            }
        }
    }

    // Locality: a query beside one cluster is pulled toward it, not toward a
    // far cluster; kernel values decrease with distance.
    let cfg = DriftConfig { kernel, ..DriftConfig::default() };
    let near = gaussian_batch(&mut stream, 32, 2, 0.0, 0.1).translate(&[1.0, 0.0])?;
    let far = gaussian_batch(&mut stream, 32, 2, 0.0, 0.1).translate(&[-8.0, 0.0])?;
    let positives = SampleBatch::new(64, 2, [near.as_slice(), far.as_slice()].concat())?;
    let query = SampleBatch::from_rows(&[[0.0, 0.0]])?;
    let pull = drift(&query, &positives, &query, &cfg)?;
    // Pull must point toward +x (the near cluster); report the violation size.
    let violation = (-pull.row(0)[0]).max(0.0);
    out.push(CheckRecord::at_most("locality-attraction", "near=(1,0),far=(-8,0)".into(), violation, 0.0));

    let sign = match kernel {
        KernelShape::Decaying => -1.0,
        KernelShape::Growing => 1.0,
    };
    let k_near = (sign * 1.0_f64).exp();
    let k_far = (sign * 5.0_f64).exp();
    out.push(CheckRecord::at_most(
        "locality-kernel-decay",
        "d=1 vs d=5, tau=1".into(),
        (k_far - k_near).max(0.0),
        0.0,
    ));
    Ok(out)
}
