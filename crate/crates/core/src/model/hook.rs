use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// External per-token vectors (a stand-in for a pretrained language model).
pub trait ContextualEmbeddingSource: Send + Sync {
    fn dim(&self) -> usize;

    /// Returns an (n, dim) matrix for `tokens`; `tokens` is nonempty.
    fn embed(&self, tokens: &[String]) -> Tensor;
}

/// Deterministic source: every token type gets a fixed pseudo-random vector
/// and each position mixes in half of its neighbours' vectors.
#[derive(Clone, Debug)]
pub struct HashEmbedding {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedding {
    fn token_vector(&self, token: &str) -> Vec<f64> {
        // FNV-1a, so vectors do not depend on the toolchain's hasher.
        let hash = token.bytes().fold(0xcbf2_9ce4_8422_2325u64 ^ self.seed, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(hash);
        (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl ContextualEmbeddingSource for HashEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Tensor {
        let base: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        let n = tokens.len();
        let mut out = Vec::with_capacity(n * self.dim);
        for i in 0..n {
            for d in 0..self.dim {
                let mut v = base[i][d];
                if i > 0 {
                    v += 0.5 * base[i - 1][d];
                }
                if i + 1 < n {
                    v += 0.5 * base[i + 1][d];
                }
                out.push(v);
            }
        }
        Tensor::new(&[n, self.dim], out).expect("nonempty tokens")
    }
}
