//! Shared inputs for the benchmarks.

use cd_core::decomposer::{Decomposition, Provenance};
use cd_core::submodular::{Similarity, SimilarityCache};
use cd_core::transformer::{Example, ModelConfig, ToyTransformer};
use cd_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A default-sized model with random weights.
pub fn model(seed: u64) -> ToyTransformer {
    ToyTransformer::new(ModelConfig {
        seed,
        init_std: 0.1,
        ..Default::default()
    })
    .expect("default config is valid")
}

/// A prepared example of `len` random tokens.
pub fn example(model: &ToyTransformer, len: usize, seed: u64) -> Example {
    let x = Matrix::random_normal(model.d(), len, 0.5, &mut rng(seed));
    model.prepare(&x, 0).expect("shapes match")
}

/// Similarity cache over `n` random concepts and two classes.
pub fn similarity_cache(n: usize, seed: u64) -> SimilarityCache {
    let mut r = rng(seed);
    let mut unit = |dim: usize| -> Vec<f64> {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / norm).collect()
    };
    let concepts: Vec<Vec<f64>> = (0..n).map(|_| unit(64)).collect();
    let classes: Vec<Vec<f64>> = (0..2).map(|_| unit(64)).collect();
    SimilarityCache::from_embeddings((0..n as u32).collect(), &concepts, &classes, Similarity::ShiftedCosine)
        .expect("embeddings are consistent")
}

/// Random `d x n_c` times `n_c x n_q` decomposition.
pub fn decomposition(d: usize, n_c: usize, n_q: usize, seed: u64) -> Decomposition {
    let mut r = rng(seed);
    Decomposition::new(
        Matrix::random_normal(d, n_c, 0.3, &mut r),
        Matrix::random_normal(n_c, n_q, 1.0, &mut r),
        (0..n_c as u32).collect(),
        (0..n_c).map(|i| i % 2).collect(),
        Provenance::CdTuned,
    )
    .expect("shapes match")
}
