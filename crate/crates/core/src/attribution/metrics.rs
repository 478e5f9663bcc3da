use serde::{Deserialize, Serialize};

use crate::decomposer::{concept_keys, Decomposition};
use crate::embedding::{Encoder, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::{dot, pearson, Matrix};
use crate::transformer::{evaluate_prompt, Example, ToyTransformer};

/// Fraction of `data` classified correctly with `prompt`.
pub fn accuracy(model: &ToyTransformer, prompt: &Matrix, data: &[Example]) -> Result<f64> {
    Ok(evaluate_prompt(model, prompt, data)?.1)
}

pub fn decomposition_accuracy(model: &ToyTransformer, dec: &Decomposition, data: &[Example]) -> Result<f64> {
    accuracy(model, &dec.prompt(), data)
}

/// Indices of the `top_k` largest keys, ties to the smaller index.
pub fn top_k_by_key(keys: &[f64], top_k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx.truncate(top_k);
    idx
}

/// Pearson correlation between keys and scores over the `top_k` concepts
/// with the largest keys. `None` when either slice is constant.
pub fn correlation_top_k(keys: &[f64], scores: &[f64], top_k: usize) -> Result<Option<f64>> {
    if keys.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} keys but {} scores",
            keys.len(),
            scores.len()
        )));
    }
    if top_k > keys.len() {
        return Err(Error::InvalidInput(format!(
            "top_k = {top_k} exceeds {} concepts",
            keys.len()
        )));
    }
    let idx = top_k_by_key(keys, top_k);
    let k: Vec<f64> = idx.iter().map(|&i| keys[i]).collect();
    let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
    match pearson(&k, &s) {
        Ok(r) => Ok(Some(r)),
        Err(Error::DegenerateInput(_)) => Ok(None),
        Err(Error::InvalidInput(_)) if top_k < 2 => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn concept_correlation(dec: &Decomposition, scores: &[f64], top_k: usize) -> Result<Option<f64>> {
    correlation_top_k(&concept_keys(dec), scores, top_k)
}

/// The `n` vocabulary tokens most similar to any label name under the
/// encoder, by cosine descending with ties kept in vocabulary order.
pub fn vocab_baseline(encoder: &Encoder, labels: &LabelSet, vocab: &[String], n: usize) -> Result<Vec<String>> {
    if vocab.is_empty() {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    if n > vocab.len() {
        return Err(Error::InvalidInput(format!(
            "asked for {n} tokens from a vocabulary of {}",
            vocab.len()
        )));
    }
    let label_emb = labels
        .names()
        .iter()
        .map(|l| encoder.embed(l))
        .collect::<Result<Vec<_>>>()?;
    let mut scored = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let e = encoder.embed(t)?;
            let best = label_emb.iter().map(|l| dot(l, &e)).fold(f64::NEG_INFINITY, f64::max);
            Ok((i, best))
        })
        .collect::<Result<Vec<_>>>()?;
    // Stable sort keeps vocabulary order among equal scores.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored.into_iter().take(n).map(|(i, _)| vocab[i].clone()).collect())
}

/// One row of the correlation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub dataset: String,
    pub method: String,
    pub top_k: usize,
    /// Mean over seeds with a defined correlation; `None` when none was.
    pub rho: Option<f64>,
    pub variance: Option<f64>,
    /// Seeds that contributed.
    pub n: usize,
}

impl CorrelationRow {
    /// Aggregates per-seed values, skipping undefined ones.
    pub fn from_values(dataset: &str, method: &str, top_k: usize, values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let (rho, variance) = if defined.is_empty() {
            (None, None)
        } else {
            (
                Some(crate::numerics::mean(&defined)),
                Some(crate::numerics::variance(&defined)),
            )
        };
        CorrelationRow {
            dataset: dataset.to_string(),
            method: method.to_string(),
            top_k,
            rho,
            variance,
            n: defined.len(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

impl CorrelationReport {
    /// Columns: dataset, method, top_k, rho, variance, n. Undefined values
    /// are written as `n/a`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,method,top_k,rho,variance,n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.dataset,
                r.method,
                r.top_k,
                fmt_opt(r.rho),
                fmt_opt(r.variance),
                r.n
            ));
        }
        out
    }
}
