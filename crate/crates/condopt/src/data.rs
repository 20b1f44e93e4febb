//! Paired predictor/response observations in row-major storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::SampleSpace;

/// A dense n x dim matrix of points, one row per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl PointMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("point dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Data(format!(
                "flat length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Data(format!(
                    "row {i} has {} coordinates, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// One-dimensional column of values.
    pub fn from_column(values: Vec<f64>) -> Self {
        Self { dim: 1, data: values }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: u32) -> &[f64] {
        let i = i as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    #[inline]
    pub fn coord(&self, i: u32, d: usize) -> f64 {
        self.data[i as usize * self.dim + d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Copy the selected rows into a new matrix, preserving order.
    pub(crate) fn gather(&self, indices: &[u32]) -> PointMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointMatrix { dim: self.dim, data }
    }

    /// Per-column (min, max) ranges; `None` when there are no rows.
    pub fn ranges(&self) -> Option<Vec<(f64, f64)>> {
        if self.is_empty() {
            return None;
        }
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for row in self.rows() {
            for (d, &v) in row.iter().enumerate() {
                out[d].0 = out[d].0.min(v);
                out[d].1 = out[d].1.max(v);
            }
        }
        Some(out)
    }
}

/// Paired predictor and response points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: PointMatrix,
    pub y: PointMatrix,
}

impl Dataset {
    pub fn new(x: PointMatrix, y: PointMatrix) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Data(format!(
                "{} predictor rows but {} response rows",
                x.len(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Check every observation against the declared spaces, reporting the
    /// first offending row.
    pub fn validate(&self, space_x: &SampleSpace, space_y: &SampleSpace) -> Result<()> {
        for i in 0..self.len() as u32 {
            space_x
                .check_point(self.x.row(i))
                .map_err(|e| Error::Data(format!("predictor row {i}: {e}")))?;
            space_y
                .check_point(self.y.row(i))
                .map_err(|e| Error::Data(format!("response row {i}: {e}")))?;
        }
        Ok(())
    }
}
