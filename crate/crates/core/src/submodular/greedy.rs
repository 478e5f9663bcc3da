use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::objective::{objective, CoverageMode, SelectionConfig, Similarity, SimilarityCache};
use crate::embedding::ConceptId;
use crate::error::{Error, Result};

/// The chosen subset `C_y` of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSet {
    pub class: String,
    pub k: usize,
    /// In insertion order.
    pub ids: Vec<ConceptId>,
    /// Marginal gain of each insertion.
    pub gains: Vec<f64>,
    pub objective: f64,
}

/// Running state for marginal gains. `cover[c1]` is the best similarity of
/// `c1` to anything chosen so far, `None` while nothing is chosen.
struct Marginals<'a> {
    cache: &'a SimilarityCache,
    cfg: &'a SelectionConfig,
    div: Vec<f64>,
    cover: Option<Vec<f64>>,
}

impl<'a> Marginals<'a> {
    fn new(cache: &'a SimilarityCache, cfg: &'a SelectionConfig) -> Self {
        Marginals {
            cache,
            cfg,
            div: cache.diversity_terms(cfg),
            cover: None,
        }
    }

    fn gain(&self, c: usize) -> f64 {
        let phi = &self.cache.concept_concept;
        let n = self.cache.len();
        let cov = match (self.cfg.coverage_mode, &self.cover) {
            (CoverageMode::PairwiseSum, _) | (CoverageMode::FacilityLocation, None) => {
                (0..n).map(|c1| phi[(c1, c)]).sum::<f64>()
            }
            (CoverageMode::FacilityLocation, Some(cur)) => (0..n)
                .map(|c1| (phi[(c1, c)] - cur[c1]).max(0.0))
                .sum::<f64>(),
        };
        self.cfg.lambda * self.div[c] + cov
    }

    fn insert(&mut self, c: usize) {
        let phi = &self.cache.concept_concept;
        let n = self.cache.len();
        match &mut self.cover {
            None => self.cover = Some((0..n).map(|c1| phi[(c1, c)]).collect()),
            Some(cur) => {
                for (c1, v) in cur.iter_mut().enumerate() {
                    *v = v.max(phi[(c1, c)]);
                }
            }
        }
    }
}

fn finish(class: &str, cache: &SimilarityCache, cfg: &SelectionConfig, chosen: &[usize], gains: Vec<f64>) -> SelectedSet {
    SelectedSet {
        class: class.to_string(),
        k: cfg.k,
        ids: chosen.iter().map(|&c| cache.ids[c]).collect(),
        gains,
        objective: objective(chosen, cache, cfg),
    }
}

fn check(cache: &SimilarityCache, class: &str, cfg: &SelectionConfig) -> Result<()> {
    cfg.validate()?;
    if cache.is_empty() {
        return Err(Error::EmptyClass(class.to_string()));
    }
    Ok(())
}

/// Recomputes every marginal gain at every step.
pub fn naive_greedy(cache: &SimilarityCache, class: &str, cfg: &SelectionConfig) -> Result<SelectedSet> {
    check(cache, class, cfg)?;
    let n = cache.len();
    let mut m = Marginals::new(cache, cfg);
    let mut taken = vec![false; n];
    let mut chosen = Vec::new();
    let mut gains = Vec::new();
    while chosen.len() < cfg.k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..n).filter(|&c| !taken[c]) {
            let g = m.gain(c);
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((c, g));
            }
        }
        let Some((c, g)) = best else { break };
        if g <= 0.0 {
            break;
        }
        taken[c] = true;
        m.insert(c);
        chosen.push(c);
        gains.push(g);
    }
    Ok(finish(class, cache, cfg, &chosen, gains))
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    gain: f64,
    idx: usize,
    round: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Max-heap order: larger gain first, then smaller index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Greedy with stale upper bounds in a priority queue. Marginal gains only
/// shrink as the set grows, so a freshly recomputed gain that still tops the
/// queue is the true maximum. Falls back to [`naive_greedy`] for raw cosine,
/// where the first insertion can be worth less than later ones.
pub fn lazy_greedy(cache: &SimilarityCache, class: &str, cfg: &SelectionConfig) -> Result<SelectedSet> {
    check(cache, class, cfg)?;
    if cfg.similarity == Similarity::Cosine && cfg.coverage_mode == CoverageMode::FacilityLocation {
        return naive_greedy(cache, class, cfg);
    }
    let n = cache.len();
    let mut m = Marginals::new(cache, cfg);
    let mut heap: BinaryHeap<Entry> = (0..n)
        .map(|idx| Entry {
            gain: m.gain(idx),
            idx,
            round: 0,
        })
        .collect();
    let mut chosen = Vec::new();
    let mut gains = Vec::new();
    while chosen.len() < cfg.k.min(n) {
        let Some(top) = heap.pop() else { break };
        let round = chosen.len();
        if top.round == round {
            if top.gain <= 0.0 {
                break;
            }
            m.insert(top.idx);
            chosen.push(top.idx);
            gains.push(top.gain);
        } else {
            heap.push(Entry {
                gain: m.gain(top.idx),
                idx: top.idx,
                round,
            });
        }
    }
    Ok(finish(class, cache, cfg, &chosen, gains))
}

/// Greedy selection; lazy evaluation where it is exact.
pub fn greedy_select(cache: &SimilarityCache, class: &str, cfg: &SelectionConfig) -> Result<SelectedSet> {
    lazy_greedy(cache, class, cfg)
}

/// Largest number of subsets [`brute_force_opt`] will enumerate.
pub const BRUTE_FORCE_BUDGET: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact maximizer over all subsets of size `min(k, |S_y|)`. Ties go to the
/// lexicographically smallest index set, and ids are reported in that order.
pub fn brute_force_opt(cache: &SimilarityCache, class: &str, cfg: &SelectionConfig) -> Result<SelectedSet> {
    check(cache, class, cfg)?;
    let n = cache.len();
    let k = cfg.k.min(n);
    let count = binomial(n, k);
    if count > BRUTE_FORCE_BUDGET {
        return Err(Error::Budget(format!(
            "C({n}, {k}) = {count} subsets exceeds the budget of {BRUTE_FORCE_BUDGET}"
        )));
    }
    let mut comb: Vec<usize> = (0..k).collect();
    let mut best = (objective(&comb, cache, cfg), comb.clone());
    loop {
        // Next combination in lexicographic order.
        let Some(i) = (0..k).rev().find(|&i| comb[i] != i + n - k) else { break };
        comb[i] += 1;
        for j in (i + 1)..k {
            comb[j] = comb[j - 1] + 1;
        }
        let f = objective(&comb, cache, cfg);
        if f > best.0 {
            best = (f, comb.clone());
        }
    }
    let chosen = best.1;
    let gains = (0..chosen.len())
        .map(|i| objective(&chosen[..=i], cache, cfg) - objective(&chosen[..i], cache, cfg))
        .collect();
    Ok(finish(class, cache, cfg, &chosen, gains))
}
