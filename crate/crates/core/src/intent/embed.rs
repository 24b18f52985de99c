//! Signed feature-hashing text embedding.
//!
//! Text is lowercased and split on every non-alphanumeric character. Each
//! unigram and each adjacent-token bigram (joined by a single space) is hashed
//! with 64-bit FNV-1a; the hash modulo the dimension selects the bucket and
//! the top bit selects the sign. The bucket vector is L2-normalized.

use crate::preference::cosine;
use crate::seed::fnv1a64;

pub const DEFAULT_DIM: usize = 256;

/// Unit-norm embedding, or all zeros for text without tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Embedder {
    dim: usize,
}

impl Default for Embedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl Embedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn add_feature(&self, acc: &mut [f64], feature: &str) {
        let h = fnv1a64(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let tokens = tokenize(text);
        let mut acc = vec![0.0; self.dim];
        for t in &tokens {
            self.add_feature(&mut acc, t);
        }
        for pair in tokens.windows(2) {
            self.add_feature(&mut acc, &format!("{} {}", pair[0], pair[1]));
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|v| *v /= norm);
        }
        EmbeddingVector(acc)
    }
}

/// Embeds with the default dimension.
pub fn embed(text: &str) -> EmbeddingVector {
    Embedder::default().embed(text)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    cosine(&a.0, &b.0)
}
