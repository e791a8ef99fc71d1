use unicode_normalization::UnicodeNormalization;

use super::ProviderError;

pub const DEFAULT_EMBED_DIM: usize = 256;

/// Text to fixed-dimension unit vectors.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

/// Character 1..=3-gram counts hashed into `dim` buckets with FNV-1a, then
/// L2-normalized. Not a semantic encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramEmbedder {
    pub dim: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBED_DIM }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl HashedNgramEmbedder {
    /// Bucket index of every n-gram of `text`, in generation order.
    pub fn buckets(&self, text: &str) -> Vec<usize> {
        let chars: Vec<char> = text.trim().nfc().map(|c| c.to_ascii_lowercase()).collect();
        let mut out = Vec::new();
        let mut buf = String::new();
        for n in 1..=3 {
            for gram in chars.windows(n) {
                buf.clear();
                buf.extend(gram);
                out.push((fnv1a(buf.as_bytes()) % self.dim as u64) as usize);
            }
        }
        out
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput("embed"));
        }
        let mut v = vec![0.0; self.dim];
        for b in self.buckets(text) {
            v[b] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Cosine similarity; `None` for mismatched lengths or a zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}
