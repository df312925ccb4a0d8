//! Signed feature hashing for text.
//!
//! A self-contained stand-in for a neural text encoder: lowercase, split on
//! Unicode whitespace, enumerate word n-grams, hash each n-gram (tokens
//! joined by a single 0x20 byte) with FNV-1a 64, and add +/-1 into
//! `hash mod d` with the sign taken from hash bit 63. Rows are
//! L2-normalized at the end; a document with no tokens stays all-zero.

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit over a byte stream.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(FNV_OFFSET)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

/// Hash of joined tokens without materializing the joined string.
pub fn hash_ngram(tokens: &[&str]) -> u64 {
    let mut h = Fnv1a::new();
    for (i, token) in tokens.iter().enumerate() {
        if i > 0 {
            h.update(b" ");
        }
        h.update(token.as_bytes());
    }
    h.finish()
}

/// Hashed n-gram featurizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dimension: usize,
    pub ngram_orders: Vec<usize>,
    pub lowercase: bool,
}

impl FeaturizerConfig {
    /// Unigrams plus bigrams, lowercased.
    pub fn new(dimension: usize) -> Self {
        FeaturizerConfig {
            dimension,
            ngram_orders: vec![1, 2],
            lowercase: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::InvalidArgument(format!(
                "feature dimension must be at least 2, got {}",
                self.dimension
            )));
        }
        if self.ngram_orders.is_empty() {
            return Err(Error::InvalidArgument("no n-gram orders configured".into()));
        }
        if self.ngram_orders.iter().any(|&o| o == 0) {
            return Err(Error::InvalidArgument("n-gram order 0 is meaningless".into()));
        }
        Ok(())
    }
}

/// Embed documents as signed hashed n-gram vectors.
///
/// Deterministic in `(text, config)`; permuting the documents permutes the
/// rows identically.
pub fn featurize_text(
    documents: &[(String, String)],
    config: &FeaturizerConfig,
) -> Result<EmbeddingCorpus> {
    config.validate()?;
    if documents.is_empty() {
        return Err(Error::InvalidArgument("no documents to featurize".into()));
    }
    let d = config.dimension;
    let mut ids = Vec::with_capacity(documents.len());
    let mut features = Vec::with_capacity(documents.len() * d);
    let mut row = vec![0.0f64; d];
    for (id, text) in documents {
        row.fill(0.0);
        hash_document(text, config, &mut row);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut row {
                *v /= norm;
            }
        }
        features.extend(row.iter().map(|&v| v as f32));
        ids.push(id.clone());
    }
    EmbeddingCorpus::new(ids, features, d)
}

fn hash_document(text: &str, config: &FeaturizerConfig, row: &mut [f64]) {
    let lowered;
    let text = if config.lowercase {
        lowered = text.to_lowercase();
        &lowered
    } else {
        text
    };
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let d = row.len() as u64;
    for &order in &config.ngram_orders {
        if tokens.len() < order {
            continue;
        }
        for window in tokens.windows(order) {
            let h = hash_ngram(window);
            let bucket = (h % d) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            row[bucket] += sign;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<(String, String)> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("doc{i}"), t.to_string()))
            .collect()
    }

    #[test]
    fn featurizing_twice_is_identical() {
        let config = FeaturizerConfig::new(32);
        let documents = docs(&["the quick brown fox", "jumps over the lazy dog"]);
        let a = featurize_text(&documents, &config).unwrap();
        let b = featurize_text(&documents, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rows_are_unit_norm() {
        let config = FeaturizerConfig::new(64);
        let corpus = featurize_text(&docs(&["alpha beta gamma delta"]), &config).unwrap();
        let norm: f32 = corpus.row(0).iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_document_stays_zero() {
        let config = FeaturizerConfig::new(16);
        let corpus = featurize_text(&docs(&["", "some words"]), &config).unwrap();
        assert!(corpus.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_word_lands_in_the_fnv_bucket() {
        // Independent FNV-1a oracle, written out long-hand.
        let mut h: u64 = 14695981039346656037;
        for &b in b"the" {
            h ^= u64::from(b);
            h = h.wrapping_mul(1099511628211);
        }
        let expected_bucket = (h % 64) as usize;
        let expected_sign = if h >> 63 == 0 { 1.0f32 } else { -1.0f32 };

        let config = FeaturizerConfig {
            dimension: 64,
            ngram_orders: vec![1],
            lowercase: true,
        };
        let corpus = featurize_text(&docs(&["the"]), &config).unwrap();
        for (j, &v) in corpus.row(0).iter().enumerate() {
            if j == expected_bucket {
                assert_eq!(v, expected_sign);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn bigrams_join_with_a_single_space() {
        let via_tokens = hash_ngram(&["ab", "cd"]);
        let mut direct = Fnv1a::new();
        direct.update(b"ab cd");
        assert_eq!(via_tokens, direct.finish());
    }

    #[test]
    fn lowercase_folds_case() {
        let config = FeaturizerConfig::new(32);
        let a = featurize_text(&docs(&["Hello World"]), &config).unwrap();
        let b = featurize_text(&docs(&["hello world"]), &config).unwrap();
        assert_eq!(a.row(0), b.row(0));
    }

    #[test]
    fn empty_document_list_is_rejected() {
        let config = FeaturizerConfig::new(16);
        assert!(featurize_text(&[], &config).is_err());
    }

    #[test]
    fn permuting_documents_permutes_rows() {
        let config = FeaturizerConfig::new(32);
        let fwd = docs(&["one two", "three four", "five six"]);
        let mut rev = fwd.clone();
        rev.reverse();
        let a = featurize_text(&fwd, &config).unwrap();
        let b = featurize_text(&rev, &config).unwrap();
        for i in 0..3 {
            assert_eq!(a.row(i), b.row(2 - i));
        }
    }
}
