//! Embedding vectors and cosine-similarity arithmetic.
//!
//! All arithmetic is done in `f64`, whatever precision the provider delivered.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VectorError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("prompt set is empty")]
    EmptyPromptSet,
    #[error("vector has no components")]
    Empty,
    #[error("vector component {0} is not finite")]
    NonFinite(usize),
}

/// Tolerance on the norm of a vector flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingVector {
    values: Vec<f64>,
    model_id: String,
    normalized: bool,
}

impl EmbeddingVector {
    pub fn new(model_id: impl Into<String>, values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self { values, model_id: model_id.into(), normalized: false })
    }

    pub fn from_f32(model_id: impl Into<String>, values: &[f32]) -> Result<Self, VectorError> {
        Self::new(model_id, values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(dot(&self.values, &self.values))
    }

    pub fn dot(&self, other: &Self) -> Result<f64, VectorError> {
        check_dims(self, other)?;
        Ok(dot(&self.values, &other.values))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<(), VectorError> {
    if a.dim() != b.dim() {
        return Err(VectorError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// `<a, b> / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, VectorError> {
    check_dims(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn l2_normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, VectorError> {
    let n = v.norm();
    if n == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok(EmbeddingVector {
        values: v.values.iter().map(|x| x / n).collect(),
        model_id: v.model_id.clone(),
        normalized: true,
    })
}

/// Mean cosine similarity between one image and every prompt; the divisor is
/// the number of prompts.
pub fn mean_similarity(image: &EmbeddingVector, prompts: &[EmbeddingVector]) -> Result<f64, VectorError> {
    if prompts.is_empty() {
        return Err(VectorError::EmptyPromptSet);
    }
    let mut sum = 0.0;
    for p in prompts {
        sum += cosine_similarity(image, p)?;
    }
    Ok(sum / prompts.len() as f64)
}
