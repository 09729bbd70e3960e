//! Two-sample distances: energy distance and sliced Wasserstein-1.

use serde::{Deserialize, Serialize};

use crate::batch::SampleBatch;
use crate::drift::distance;
use crate::error::{Error, Result};
use crate::rng::Stream;

pub const DEFAULT_PROJECTIONS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Raw U-statistic; may be slightly negative for matching distributions.
    pub energy_distance: f64,
    pub sliced_w1: f64,
    pub projections: usize,
    pub generated: usize,
    pub reference: usize,
}

/// Mean distance between all cross pairs, or all distinct within-sample
/// pairs when `same` is set. Row sums are accumulated separately and then
/// added in row order.
fn mean_pair_distance(a: &SampleBatch, b: &SampleBatch, same: bool) -> f64 {
    let mut total = 0.0;
    for (i, x) in a.iter_rows().enumerate() {
        let mut row = 0.0;
        for (j, y) in b.iter_rows().enumerate() {
            if !(same && i == j) {
                row += distance(x, y);
            }
        }
        total += row;
    }
    let pairs = if same {
        a.rows() * (a.rows() - 1)
    } else {
        a.rows() * b.rows()
    };
    total / pairs as f64
}

/// `2·E‖a−b‖ − E‖a−a'‖ − E‖b−b'‖` with unbiased (distinct-pair) within-sample
/// means. A batch compared with itself is one sample, not two independent
/// ones, so the cross term then also skips coincident pairs and the result
/// is exactly zero.
pub fn energy_distance(a: &SampleBatch, b: &SampleBatch) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "energy distance: dimensions differ ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::invalid("energy distance needs at least two samples per side"));
    }
    let cross = mean_pair_distance(a, b, a == b);
    let within_a = mean_pair_distance(a, a, true);
    let within_b = mean_pair_distance(b, b, true);
    Ok(2.0 * cross - within_a - within_b)
}

/// Unit directions drawn as normalized Gaussian vectors.
pub fn random_directions(dim: usize, count: usize, stream: &mut Stream) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let mut v = vec![0.0; dim];
            stream.fill_normal(&mut v);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
                break v;
            }
        })
        .collect()
}

/// Sliced W1 along the given unit directions. Unequal sample counts are
/// reduced to the first `min(|a|, |b|)` rows of each batch.
pub fn sliced_w1_with(a: &SampleBatch, b: &SampleBatch, directions: &[Vec<f64>]) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid("sliced W1: dimensions differ"));
    }
    if directions.is_empty() {
        return Err(Error::invalid("sliced W1: need at least one projection"));
    }
    let n = a.rows().min(b.rows());
    let project = |batch: &SampleBatch, dir: &[f64]| -> Vec<f64> {
        let mut p: Vec<f64> = batch
            .iter_rows()
            .take(n)
            .map(|r| r.iter().zip(dir).map(|(x, d)| x * d).sum())
            .collect();
        p.sort_unstable_by(f64::total_cmp);
        p
    };
    let mut total = 0.0;
    for dir in directions {
        if dir.len() != a.dim() {
            return Err(Error::invalid("sliced W1: direction dimension mismatch"));
        }
        let pa = project(a, dir);
        let pb = project(b, dir);
        total += pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
    }
    Ok(total / directions.len() as f64)
}

pub fn sliced_w1(a: &SampleBatch, b: &SampleBatch, projections: usize, stream: &mut Stream) -> Result<f64> {
    if projections == 0 {
        return Err(Error::invalid("sliced W1: need at least one projection"));
    }
    let dirs = random_directions(a.dim(), projections, stream);
    sliced_w1_with(a, b, &dirs)
}

/// Both metrics, with directions drawn from `stream`.
pub fn evaluate(
    generated: &SampleBatch,
    reference: &SampleBatch,
    projections: usize,
    stream: &mut Stream,
) -> Result<MetricReport> {
    Ok(MetricReport {
        energy_distance: energy_distance(generated, reference)?,
        sliced_w1: sliced_w1(generated, reference, projections, stream)?,
        projections,
        generated: generated.rows(),
        reference: reference.rows(),
    })
}
