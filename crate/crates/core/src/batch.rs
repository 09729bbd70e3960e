//! Dense row-major sample batches.
//!
//! A [`SampleBatch`] is the empirical stand-in for a distribution: `rows`
//! points of dimension `dim`, stored contiguously. Every entry is finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SampleBatch {
    /// Builds a batch from row-major data, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::invalid(format!(
                "batch shape {rows}x{dim} must have at least one row and one column"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::invalid(format!(
                "batch data has {} entries, expected {}x{}={}",
                data.len(),
                rows,
                dim,
                rows * dim
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::invalid("batch must have at least one row"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn zeros(rows: usize, dim: usize) -> Result<Self> {
        Self::new(rows, dim, vec![0.0; rows * dim])
    }

    /// Internal constructor for data already known to be finite and shaped.
    pub(crate) fn from_parts_unchecked(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * dim);
        Self { rows, dim, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Row-wise `self + scale * other`.
    pub fn add_scaled(&self, other: &SampleBatch, scale: f64) -> Result<SampleBatch> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        SampleBatch::new(self.rows, self.dim, data)
    }

    /// Row-wise `self + other`.
    pub fn add(&self, other: &SampleBatch) -> Result<SampleBatch> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        SampleBatch::new(self.rows, self.dim, data)
    }

    /// Adds the same vector to every row.
    pub fn translate(&self, offset: &[f64]) -> Result<SampleBatch> {
        if offset.len() != self.dim {
            return Err(Error::invalid(format!(
                "offset has dimension {}, batch has {}",
                offset.len(),
                self.dim
            )));
        }
        let data = self
            .data
            .chunks_exact(self.dim)
            .flat_map(|r| r.iter().zip(offset).map(|(a, c)| a + c))
            .collect();
        SampleBatch::new(self.rows, self.dim, data)
    }

    /// First `n` rows (or all rows when `n >= rows`).
    pub fn head(&self, n: usize) -> SampleBatch {
        let n = n.min(self.rows).max(1);
        Self::from_parts_unchecked(n, self.dim, self.data[..n * self.dim].to_vec())
    }

    pub fn check_same_shape(&self, other: &SampleBatch) -> Result<()> {
        if self.rows != other.rows || self.dim != other.dim {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.dim, other.rows, other.dim
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}
