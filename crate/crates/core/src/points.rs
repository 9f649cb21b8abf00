use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};

/// A row-major `n x d` collection of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(shape("points must have positive dimension"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(shape(format!(
                "{} coordinates do not split into rows of dimension {dim}",
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(shape(format!("row {i} has dimension {} but row 0 has {dim}", r.len())));
        }
        Self::new(dim, rows.concat())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    /// Reorders rows so that row `k` of the result is row `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let coords = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        Self { dim: self.dim, coords }
    }
}

#[inline]
pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub(crate) fn check_dim(expected: usize, p: &[f64], what: &str) -> Result<()> {
    if p.len() != expected {
        return Err(shape(format!(
            "{what} has dimension {} but the space has dimension {expected}",
            p.len()
        )));
    }
    Ok(())
}
