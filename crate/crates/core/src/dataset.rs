//! Observations on the torus with optional per-row weights.

use crate::angle::normalize;
use crate::error::{Error, Result};

/// `n` points on `T^d`, stored row-major, with optional non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from rows of angles in radians; values are normalized.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::param(
                    format!("rows[{i}]"),
                    format!("expected {dim} coordinates, found {}", r.len()),
                ));
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(dim, values)
    }

    /// Row-major values; `values.len()` must be a multiple of `dim`.
    pub fn from_flat(dim: usize, mut values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if values.len() % dim != 0 {
            return Err(Error::param("values", format!("length {} is not a multiple of {dim}", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                format!("row {} column {}", i / dim, i % dim),
                "angles must be finite",
            ));
        }
        for v in &mut values {
            *v = normalize(*v);
        }
        Ok(Dataset {
            dim,
            values,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param(format!("weights[{i}]"), "must be finite and non-negative"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of row `i`, one when the dataset is unweighted.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.as_ref().map_or(self.len() as f64, |w| w.iter().sum())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The rows listed in `indices`, in that order, weights included.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            dim: self.dim,
            values,
            weights: self.weights.as_ref().map(|w| indices.iter().map(|&i| w[i]).collect()),
        }
    }

    /// Keeps only the listed columns.
    pub fn project(&self, columns: &[usize]) -> Result<Dataset> {
        crate::circula::check_subset(columns, self.dim)?;
        let mut values = Vec::with_capacity(self.len() * columns.len());
        for r in self.rows() {
            values.extend(columns.iter().map(|&j| r[j]));
        }
        Ok(Dataset {
            dim: columns.len(),
            values,
            weights: self.weights.clone(),
        })
    }
}
