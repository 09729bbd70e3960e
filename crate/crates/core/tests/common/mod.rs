// Shared helpers for the integration tests (independent of library internals).
#![allow(dead_code)]

use driftlab::{SampleBatch, Stream};

pub fn gaussian(stream: &mut Stream, rows: usize, dim: usize, shift: f64, scale: f64) -> SampleBatch {
    let data: Vec<f64> = (0..rows * dim).map(|_| shift + scale * stream.normal()).collect();
    SampleBatch::new(rows, dim, data).unwrap()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Kernel mean shift `Σ e^{−‖x−y‖/τ} y / Σ e^{−‖x−y‖/τ} − x`, no stabilization.
pub fn naive_shift(x: &[f64], ys: &SampleBatch, tau: f64) -> Vec<f64> {
    let mut num = vec![0.0; x.len()];
    let mut den = 0.0;
    for y in ys.iter_rows() {
        let w = (-dist(x, y) / tau).exp();
        den += w;
        for c in 0..x.len() {
            num[c] += w * y[c];
        }
    }
    (0..x.len()).map(|c| num[c] / den - x[c]).collect()
}

/// Drift field from the naive shift: attraction minus repulsion.
pub fn naive_drift(xs: &SampleBatch, p: &SampleBatch, n: &SampleBatch, tau: f64) -> Vec<Vec<f64>> {
    xs.iter_rows()
        .map(|x| {
            let a = naive_shift(x, p, tau);
            let r = naive_shift(x, n, tau);
            a.iter().zip(&r).map(|(u, v)| u - v).collect()
        })
        .collect()
}

/// Lookahead target replayed from scratch: stage batch, drift, push, accumulate.
pub fn naive_lookahead(outputs: &SampleBatch, p: &SampleBatch, weights: &[f64], tau: f64) -> Vec<Vec<f64>> {
    let dim = outputs.dim();
    let mut batch: Vec<Vec<f64>> = outputs.iter_rows().map(|r| r.to_vec()).collect();
    let mut target = batch.clone();
    for &w in weights {
        let current = SampleBatch::from_rows(&batch).unwrap();
        let v = naive_drift(&current, p, &current, tau);
        for i in 0..batch.len() {
            for c in 0..dim {
                target[i][c] += w * v[i][c];
                batch[i][c] += v[i][c];
            }
        }
    }
    target
}
