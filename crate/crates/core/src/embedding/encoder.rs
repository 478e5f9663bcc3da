use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use super::cdem;
use crate::error::{Error, Result};
use crate::numerics::{normalize, Matrix};

/// Lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// 64-bit FNV-1a. Stable across platforms and toolchains, unlike `DefaultHasher`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Maps a token onto `1..vocab_size`; id 0 is reserved for the mask token.
pub fn token_id(token: &str, vocab_size: usize) -> usize {
    assert!(vocab_size >= 2, "vocabulary needs room for the mask token");
    1 + (fnv1a64(token.as_bytes()) % (vocab_size as u64 - 1)) as usize
}

pub fn token_ids(text: &str, vocab_size: usize) -> Vec<usize> {
    tokenize(text)
        .iter()
        .map(|t| token_id(t, vocab_size))
        .collect()
}

/// Text encoder `E(·)`: every text maps deterministically to a unit vector.
#[derive(Debug, Clone)]
pub enum Encoder {
    /// Sum of seeded Gaussian vectors for each unigram and bigram.
    Hash { dim: usize, seed: u64 },
    /// Precomputed vectors; unknown texts are an error.
    File {
        dim: usize,
        table: HashMap<String, Vec<f64>>,
    },
    /// Mean of a token embedding table (`vocab x d`) over the text's tokens.
    Pooled { table: Matrix },
}

#[derive(Deserialize)]
struct TextLine {
    text: String,
}

impl Encoder {
    pub fn hash(dim: usize, seed: u64) -> Self {
        Encoder::Hash { dim, seed }
    }

    pub fn pooled(table: Matrix) -> Self {
        Encoder::Pooled { table }
    }

    /// File-backed encoder from a JSON-lines text index (`{"text": ...}` per
    /// line, row order) and a CDEM matrix with one row per text.
    pub fn from_files(texts_path: impl AsRef<Path>, cdem_path: impl AsRef<Path>) -> Result<Self> {
        let texts_path = texts_path.as_ref();
        let raw = fs::read_to_string(texts_path).map_err(|e| Error::file(texts_path, e))?;
        let mut texts = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: TextLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: texts_path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            texts.push(t.text);
        }
        let m = cdem::load_embeddings(cdem_path)?;
        Self::from_table(texts, &m)
    }

    pub fn from_table(texts: Vec<String>, m: &Matrix) -> Result<Self> {
        if texts.len() != m.rows() {
            return Err(Error::Format(format!(
                "{} texts but {} embedding rows",
                texts.len(),
                m.rows()
            )));
        }
        let mut table = HashMap::with_capacity(texts.len());
        for (i, t) in texts.into_iter().enumerate() {
            let mut v = m.row(i).to_vec();
            normalize(&mut v)?;
            table.insert(t, v);
        }
        Ok(Encoder::File {
            dim: m.cols(),
            table,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::Hash { dim, .. } | Encoder::File { dim, .. } => *dim,
            Encoder::Pooled { table } => table.cols(),
        }
    }

    /// Unit-norm embedding of `text`.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = match self {
            Encoder::Hash { dim, seed } => hash_features(text, *dim, *seed),
            Encoder::File { table, .. } => {
                return table
                    .get(text)
                    .cloned()
                    .ok_or_else(|| Error::MissingEmbedding(text.to_string()))
            }
            Encoder::Pooled { table } => {
                let ids = token_ids(text, table.rows());
                if ids.is_empty() {
                    return Err(Error::DegenerateInput(format!("no tokens in {text:?}")));
                }
                let mut v = vec![0.0; table.cols()];
                for id in ids {
                    for (a, b) in v.iter_mut().zip(table.row(id)) {
                        *a += b;
                    }
                }
                v
            }
        };
        normalize(&mut v)?;
        Ok(v)
    }

    /// Embeddings of `texts` as the columns of a `d x n` matrix.
    pub fn embed_columns<S: AsRef<str>>(&self, texts: &[S]) -> Result<Matrix> {
        let cols = texts
            .iter()
            .map(|t| self.embed(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut m = Matrix::from_columns(&cols)?;
        if texts.is_empty() {
            m = Matrix::zeros(self.dim(), 0);
        }
        Ok(m)
    }
}

fn feature_vector(feature: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(feature.as_bytes()) ^ seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn hash_features(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let toks = tokenize(text);
    let mut v = vec![0.0; dim];
    if toks.is_empty() {
        return feature_vector(text, dim, seed);
    }
    for t in &toks {
        for (a, b) in v.iter_mut().zip(feature_vector(t, dim, seed)) {
            *a += b;
        }
    }
    for w in toks.windows(2) {
        let bigram = format!("{} {}", w[0], w[1]);
        for (a, b) in v.iter_mut().zip(feature_vector(&bigram, dim, seed)) {
            *a += 0.5 * b;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm;

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Sci/Tech news, 2024!"), vec!["sci", "tech", "news", "2024"]);
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn hash_encoder_is_deterministic_and_unit() {
        let e = Encoder::hash(16, 9);
        let a = e.embed("a quiet film").unwrap();
        let b = e.embed("a quiet film").unwrap();
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        assert!((norm(&e.embed("?!").unwrap()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hash_encoder_separates_small_corpus() {
        let e = Encoder::hash(8, 0);
        let words = ["a", "b", "c", "film", "review", "positive", "negative", "a b", "b a"];
        let vecs: Vec<_> = words.iter().map(|w| e.embed(w).unwrap()).collect();
        for i in 0..vecs.len() {
            for j in (i + 1)..vecs.len() {
                assert_ne!(vecs[i], vecs[j], "{} vs {}", words[i], words[j]);
            }
        }
    }

    #[test]
    fn file_encoder_fails_loudly() {
        let m = Matrix::from_rows(&[&[3.0, 4.0], &[0.0, 2.0]]);
        let e = Encoder::from_table(vec!["x".into(), "y".into()], &m).unwrap();
        assert_eq!(e.embed("x").unwrap(), vec![0.6, 0.8]);
        assert!(matches!(e.embed("z"), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn pooled_encoder_averages_token_rows() {
        let mut table = Matrix::zeros(5, 2);
        for i in 0..5 {
            table[(i, 0)] = i as f64;
            table[(i, 1)] = 1.0;
        }
        let e = Encoder::pooled(table.clone());
        let id = token_id("word", 5);
        let mut expect = table.row(id).to_vec();
        normalize(&mut expect).unwrap();
        assert_eq!(e.embed("word word").unwrap(), expect);
    }
}
