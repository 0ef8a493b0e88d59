//! Dense real vectors with the Euclidean inner product.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VectorError {
    #[error("vector must have at least one entry")]
    Empty,
    #[error("entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
}

/// An element of a finite-dimensional real Hilbert space.
///
/// Pairwise operations panic on a dimension mismatch; callers that accept
/// external input check dimensions up front and report errors there.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    /// Builds a vector, rejecting empty input and NaN/Inf entries.
    pub fn new(entries: Vec<f64>) -> Result<Self, VectorError> {
        if entries.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some((index, &value)) = entries.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(VectorError::NonFinite { index, value });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// The `index`-th canonical basis vector.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[index] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in dot product");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert_eq!(self.dim(), x.dim(), "dimension mismatch in axpy");
        for (s, xi) in self.0.iter_mut().zip(&x.0) {
            *s += a * xi;
        }
    }

    /// Returns `self + a * x` without modifying `self`.
    pub fn add_scaled(&self, a: f64, x: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(1.0, other)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in distance");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in hadamard");
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }
}

impl From<Vec<f64>> for RealVector {
    /// Unchecked conversion for internally produced data.
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for RealVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

impl Index<usize> for RealVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for RealVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl fmt::Debug for RealVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

impl<'a> IntoIterator for &'a RealVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
