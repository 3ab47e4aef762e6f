//! Embedding-provider contract and an offline hashing encoder.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::vector::{EmbeddingVector, VectorError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedError {
    /// Transport or provider-side failure.
    Provider(String),
    Timeout,
    /// The provider returned vectors of the wrong width.
    DimensionMismatch { expected: usize, found: usize },
    /// The provider returned a different number of vectors than texts.
    CountMismatch { expected: usize, found: usize },
    InvalidVector(VectorError),
}

impl core::fmt::Display for EmbedError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EmbedError::Provider(msg) => write!(f, "embedding provider failed: {msg}"),
            EmbedError::Timeout => f.write_str("embedding provider timed out"),
            EmbedError::DimensionMismatch { expected, found } => {
                write!(f, "embedding dimension mismatch: expected {expected}, got {found}")
            }
            EmbedError::CountMismatch { expected, found } => {
                write!(f, "embedding provider returned {found} vectors for {expected} texts")
            }
            EmbedError::InvalidVector(e) => write!(f, "invalid embedding: {e}"),
        }
    }
}

/// Request `{model_id, texts}` to response of equal-width vectors.
pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Embeds `texts` and checks count and width before normalizing.
pub fn embed_checked(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let raw = embedder.embed(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbedError::CountMismatch { expected: texts.len(), found: raw.len() });
    }
    raw.into_iter()
        .map(|v| {
            if v.len() != embedder.dim() {
                return Err(EmbedError::DimensionMismatch { expected: embedder.dim(), found: v.len() });
            }
            EmbeddingVector::normalized(v).map_err(EmbedError::InvalidVector)
        })
        .collect()
}

pub fn embed_one(embedder: &dyn Embedder, text: &str) -> Result<EmbeddingVector, EmbedError> {
    let mut out = embed_checked(embedder, &[String::from(text)])?;
    Ok(out.remove(0))
}

/// Signed feature hashing over lowercase word unigrams and bigrams.
///
/// Deterministic and dependency-free; identical texts map to identical
/// vectors and texts sharing vocabulary land close together.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    model_id: String,
}

impl HashingEmbedder {
    pub const MODEL_ID: &'static str = "hashing-v1";

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashingEmbedder { dim, model_id: String::from(Self::MODEL_ID) }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        let mut v = vec![0.0; self.dim];
        if tokens.is_empty() {
            v[0] = 1.0;
            return v;
        }
        let mut add = |h: u64, weight: f64| {
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign * weight;
        };
        for t in &tokens {
            add(fnv1a(&[t.as_bytes()]), 1.0);
        }
        for pair in tokens.windows(2) {
            add(fnv1a(&[pair[0].as_bytes(), b" ", pair[1].as_bytes()]), 0.5);
        }
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in *part {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl Embedder for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_match() {
        let e = HashingEmbedder::new(64);
        let a = embed_one(&e, "Mixed-initiative workflows help scholars.").unwrap();
        let b = embed_one(&e, "Mixed-initiative workflows help scholars.").unwrap();
        assert_eq!(a, b);
        assert!((a.similarity(&b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_vocabulary_scores_higher() {
        let e = HashingEmbedder::new(256);
        let q = embed_one(&e, "citation graph retrieval").unwrap();
        let near = embed_one(&e, "we retrieve papers from the citation graph").unwrap();
        let far = embed_one(&e, "participants were compensated with vouchers").unwrap();
        assert!(q.similarity(&near).unwrap() > q.similarity(&far).unwrap());
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        let e = HashingEmbedder::new(8);
        assert!(embed_one(&e, "...").is_ok());
    }

    struct WrongWidth;
    impl Embedder for WrongWidth {
        fn model_id(&self) -> &str {
            "wrong"
        }
        fn dim(&self) -> usize {
            4
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(texts.iter().map(|_| vec![1.0; 3]).collect())
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        assert_eq!(
            embed_one(&WrongWidth, "x"),
            Err(EmbedError::DimensionMismatch { expected: 4, found: 3 })
        );
    }
}
