//! Per-class concept subset selection: a diversity term plus a coverage
//! term, maximized greedily under a cardinality constraint.

mod greedy;
mod objective;

pub use greedy::{brute_force_opt, greedy_select, lazy_greedy, naive_greedy, SelectedSet, BRUTE_FORCE_BUDGET};
pub use objective::{
    coverage_score, diversity_score, objective, CoverageMode, Psi, SelectionConfig, Similarity, SimilarityCache,
};

use crate::embedding::CandidatePool;
use crate::error::Result;

/// Runs greedy selection for every class of an embedded pool.
/// `class_embeddings` holds one unit vector per label, in label order.
pub fn select_all(pool: &CandidatePool, class_embeddings: &[Vec<f64>], cfg: &SelectionConfig) -> Result<Vec<SelectedSet>> {
    pool.labels()
        .names()
        .iter()
        .map(|l| {
            let cache = SimilarityCache::for_class(pool, l, class_embeddings, cfg.similarity)?;
            greedy_select(&cache, l, cfg)
        })
        .collect()
}
