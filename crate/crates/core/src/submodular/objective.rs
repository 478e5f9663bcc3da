use serde::{Deserialize, Serialize};

use crate::embedding::{CandidatePool, ConceptId};
use crate::error::{Error, Result};
use crate::numerics::{dot, entropy, softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    /// `sum_{c1 in S_y} max_{c2 in C} phi(c1, c2)`
    FacilityLocation,
    /// `sum_{c1 in S_y} sum_{c2 in C} phi(c1, c2)`
    PairwiseSum,
}

/// Concave transform applied to each concept's diversity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Psi {
    Identity,
    Sqrt,
    Log1p,
}

impl Psi {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Psi::Identity => x,
            Psi::Sqrt => x.sqrt(),
            Psi::Log1p => x.ln_1p(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// `(1 + cos) / 2`, in `[0, 1]`.
    ShiftedCosine,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Concepts kept per class.
    pub k: usize,
    pub lambda: f64,
    pub temperature: f64,
    pub coverage_mode: CoverageMode,
    pub psi: Psi,
    /// Used for the concept-concept similarity `phi`.
    pub similarity: Similarity,
    /// Use `sum_y p log p` (negative entropy) as the diversity term instead
    /// of the entropy. Only valid with `psi = identity`.
    pub literal_eq5: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k: 10,
            lambda: 1.0,
            temperature: 1.0,
            coverage_mode: CoverageMode::FacilityLocation,
            psi: Psi::Identity,
            similarity: Similarity::ShiftedCosine,
            literal_eq5: false,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be finite".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidInput("temperature must be positive".into()));
        }
        if self.literal_eq5 && self.psi != Psi::Identity {
            return Err(Error::InvalidInput(
                "the signed diversity term is negative, so psi must be identity".into(),
            ));
        }
        Ok(())
    }
}

/// Similarities for one class's candidate set `S_y`, columns ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityCache {
    pub ids: Vec<ConceptId>,
    /// `N x |S_y|`, `Sim(y, c)` as cosine.
    pub class_concept: Matrix,
    /// `|S_y| x |S_y|`, `phi(c1, c2)`.
    pub concept_concept: Matrix,
}

impl SimilarityCache {
    /// `concepts` and `classes` must be unit vectors of equal width.
    pub fn from_embeddings(
        ids: Vec<ConceptId>,
        concepts: &[Vec<f64>],
        classes: &[Vec<f64>],
        similarity: Similarity,
    ) -> Result<Self> {
        if ids.len() != concepts.len() {
            return Err(Error::Shape(format!(
                "{} ids for {} embeddings",
                ids.len(),
                concepts.len()
            )));
        }
        let width = concepts.first().or(classes.first()).map_or(0, Vec::len);
        if concepts.iter().chain(classes).any(|v| v.len() != width) {
            return Err(Error::Shape("embeddings have different widths".into()));
        }
        let n = concepts.len();
        let mut class_concept = Matrix::zeros(classes.len(), n);
        for (y, e) in classes.iter().enumerate() {
            for (c, v) in concepts.iter().enumerate() {
                class_concept[(y, c)] = dot(e, v).clamp(-1.0, 1.0);
            }
        }
        let mut concept_concept = Matrix::zeros(n, n);
        for i in 0..n {
            concept_concept[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let cos = dot(&concepts[i], &concepts[j]).clamp(-1.0, 1.0);
                let phi = match similarity {
                    Similarity::ShiftedCosine => 0.5 * (1.0 + cos),
                    Similarity::Cosine => cos,
                };
                concept_concept[(i, j)] = phi;
                concept_concept[(j, i)] = phi;
            }
        }
        Ok(SimilarityCache {
            ids,
            class_concept,
            concept_concept,
        })
    }

    /// Builds the cache for `class` from an embedded pool. `class_embeddings`
    /// holds one unit vector per label, in label order.
    pub fn for_class(
        pool: &CandidatePool,
        class: &str,
        class_embeddings: &[Vec<f64>],
        similarity: Similarity,
    ) -> Result<Self> {
        let members = pool.class_members(class);
        if members.is_empty() {
            return Err(Error::EmptyClass(class.to_string()));
        }
        let mut ids = Vec::with_capacity(members.len());
        let mut embs = Vec::with_capacity(members.len());
        for c in members {
            let e = c.embedding.clone().ok_or_else(|| {
                Error::InvalidInput(format!("candidate {} has no embedding", c.id))
            })?;
            ids.push(c.id);
            embs.push(e);
        }
        Self::from_embeddings(ids, &embs, class_embeddings, similarity)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `p(y | c)` for candidate index `c`.
    pub fn class_distribution(&self, c: usize, temperature: f64) -> Vec<f64> {
        let sims: Vec<f64> = (0..self.class_concept.rows())
            .map(|y| self.class_concept[(y, c)])
            .collect();
        softmax(&sims, temperature)
    }

    /// Per-candidate diversity terms; the diversity of a set is their sum.
    pub fn diversity_terms(&self, cfg: &SelectionConfig) -> Vec<f64> {
        (0..self.len())
            .map(|c| {
                let h = entropy(&self.class_distribution(c, cfg.temperature));
                if cfg.literal_eq5 {
                    -h
                } else {
                    cfg.psi.apply(h)
                }
            })
            .collect()
    }
}

/// Diversity of the candidates at indices `chosen`.
pub fn diversity_score(chosen: &[usize], cache: &SimilarityCache, cfg: &SelectionConfig) -> f64 {
    let terms = cache.diversity_terms(cfg);
    chosen.iter().map(|&c| terms[c]).sum()
}

pub fn coverage_score(chosen: &[usize], cache: &SimilarityCache, cfg: &SelectionConfig) -> f64 {
    if chosen.is_empty() {
        return 0.0;
    }
    let phi = &cache.concept_concept;
    (0..cache.len())
        .map(|c1| match cfg.coverage_mode {
            CoverageMode::FacilityLocation => chosen
                .iter()
                .map(|&c2| phi[(c1, c2)])
                .fold(f64::NEG_INFINITY, f64::max),
            CoverageMode::PairwiseSum => chosen.iter().map(|&c2| phi[(c1, c2)]).sum(),
        })
        .sum()
}

/// `lambda * diversity + coverage`.
pub fn objective(chosen: &[usize], cache: &SimilarityCache, cfg: &SelectionConfig) -> f64 {
    cfg.lambda * diversity_score(chosen, cache, cfg) + coverage_score(chosen, cache, cfg)
}
