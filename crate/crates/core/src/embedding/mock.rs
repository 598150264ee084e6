use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbeddingBackend;
use crate::error::Result;
use crate::similarity::l2_normalize;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic unit vector for `(text, seed)`.
///
/// The generator is seeded with FNV-1a over the UTF-8 bytes of `text` followed
/// by the little-endian bytes of `seed`; components are uniform in `[-1, 1)`
/// before normalization.
pub fn mock_embed(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let h = fnv1a64(text.bytes().chain(seed.to_le_bytes()));
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    l2_normalize(&mut v);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Normalized sum of per-token mock vectors (whitespace tokens), so that
    /// lexical overlap shows up as similarity.
    Bag,
    /// One mock vector for the whole text.
    Text,
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    pub dim: usize,
    pub seed: u64,
    pub mode: MockMode,
    name: String,
}

impl MockBackend {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            mode: MockMode::Bag,
            name: "mock".into(),
        }
    }

    pub fn with_mode(mut self, mode: MockMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        match self.mode {
            MockMode::Text => mock_embed(text, self.dim, self.seed),
            MockMode::Bag => {
                let tokens: Vec<&str> = text.split_whitespace().collect();
                if tokens.len() <= 1 {
                    return mock_embed(tokens.first().copied().unwrap_or(text), self.dim, self.seed);
                }
                let mut acc = vec![0.0; self.dim];
                for tok in tokens {
                    for (a, x) in acc.iter_mut().zip(mock_embed(tok, self.dim, self.seed)) {
                        *a += x;
                    }
                }
                l2_normalize(&mut acc);
                acc
            }
        }
    }
}

impl EmbeddingBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
