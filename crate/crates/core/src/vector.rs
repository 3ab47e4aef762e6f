//! Embedding vectors and cosine similarity.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorError {
    DimensionMismatch { expected: usize, found: usize },
    ZeroVector,
    Empty,
    NonFinite,
}

impl core::fmt::Display for VectorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            VectorError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            VectorError::ZeroVector => f.write_str("zero vector has no direction"),
            VectorError::Empty => f.write_str("vector has no components"),
            VectorError::NonFinite => f.write_str("vector has a non-finite component"),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `dot(a, b) / (|a| |b|)` over raw components.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// A unit-length embedding. Construction normalizes, so the cosine of two
/// `EmbeddingVector`s is their dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        let n = norm(&values);
        if n == 0.0 {
            return Err(VectorError::ZeroVector);
        }
        values.iter_mut().for_each(|v| *v /= n);
        Ok(EmbeddingVector { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self, VectorError> {
        Self::normalized(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cosine similarity with another unit vector.
    pub fn similarity(&self, other: &EmbeddingVector) -> Result<f64, VectorError> {
        if self.dim() != other.dim() {
            return Err(VectorError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(dot(&self.values, &other.values))
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = VectorError;

    /// Deserialized vectors are trusted to be unit length already; only
    /// shape is checked so that stored values reload bit-identically.
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite);
        }
        Ok(EmbeddingVector { values })
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

impl core::fmt::Display for EmbeddingVector {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "EmbeddingVector(dim={})", self.dim())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn self_similarity_is_one() {
        let v = [0.3, -1.2, 4.0, 0.01];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_is_zero() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_against_axis() {
        let expected = 1.0 / libm::sqrt(2.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - expected).abs() < 1e-12);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        assert_eq!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(VectorError::DimensionMismatch { expected: 1, found: 2 })
        );
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), Err(VectorError::ZeroVector));
        assert_eq!(EmbeddingVector::normalized(vec![0.0; 3]), Err(VectorError::ZeroVector));
        assert_eq!(EmbeddingVector::normalized(vec![]), Err(VectorError::Empty));
    }

    #[test]
    fn normalized_vectors_agree_with_raw_cosine() {
        let a = vec![1.0, 2.0, 3.0];
        let b = vec![-2.0, 0.5, 1.0];
        let na = EmbeddingVector::normalized(a.clone()).unwrap();
        let nb = EmbeddingVector::normalized(b.clone()).unwrap();
        assert!((na.similarity(&nb).unwrap() - cosine(&a, &b).unwrap()).abs() < 1e-12);
    }
}
