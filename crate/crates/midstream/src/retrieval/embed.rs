//! Embedder contract and the deterministic bag-of-tokens test embedder.

use crate::error::EngineError;

/// Dimension of the hashed feature space.
pub const EMBED_DIM: usize = 256;

/// Text-to-unit-vector contract. Implementations must be deterministic for
/// equal input.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EngineError>;
}

/// Bag-of-tokens feature hashing into a fixed 256-dimension space,
/// L2-normalized. Token order does not matter; no model download needed.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl HashEmbedder {
    /// Feature index of one token.
    pub fn bucket(token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % EMBED_DIM as u64) as usize
    }

    pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::domain("cannot embed empty text"));
        }
        let mut v = vec![0.0f64; EMBED_DIM];
        for token in Self::tokenize(text) {
            v[Self::bucket(&token)] += 1.0;
        }
        normalize(&mut v)?;
        Ok(v)
    }
}

/// FNV-1a, 64-bit. Stable across platforms and releases, which matters for
/// persisted indexes and frozen test vectors.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn normalize(v: &mut [f64]) -> Result<(), EngineError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EngineError::domain("embedding has zero norm"));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Cosine similarity of two equal-length vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_texts_equal_vectors() {
        let e = HashEmbedder;
        assert_eq!(e.embed("alpha beta").unwrap(), e.embed("alpha beta").unwrap());
    }

    #[test]
    fn vectors_are_unit_norm() {
        let e = HashEmbedder;
        let v = e.embed("some text with several tokens").unwrap();
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bag_semantics_ignore_order() {
        let e = HashEmbedder;
        assert_eq!(e.embed("aa bb").unwrap(), e.embed("bb aa").unwrap());
    }

    #[test]
    fn two_token_vector_computed_by_hand() {
        // Independent construction of the expected bag vector for "aa bb":
        // one count in each token's bucket, then L2 normalization.
        let e = HashEmbedder;
        let got = e.embed("aa bb").unwrap();
        let ba = HashEmbedder::bucket("aa");
        let bb = HashEmbedder::bucket("bb");
        let mut expected = vec![0.0f64; EMBED_DIM];
        if ba == bb {
            expected[ba] = 1.0;
        } else {
            let inv = 1.0 / (2.0f64).sqrt();
            expected[ba] = inv;
            expected[bb] = inv;
        }
        for (g, x) in got.iter().zip(&expected) {
            assert!((g - x).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(HashEmbedder.embed("   ").is_err());
    }

    #[test]
    fn tokenization_lowercases_and_splits_punctuation() {
        let tokens: Vec<String> = HashEmbedder::tokenize("Gene-Editing, CRISPR!").collect();
        assert_eq!(tokens, vec!["gene", "editing", "crispr"]);
    }
}
