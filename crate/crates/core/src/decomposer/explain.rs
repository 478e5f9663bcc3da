use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::{concept_keys, Decomposition};
use super::tune::ConceptBasis;
use crate::embedding::{ConceptId, Encoder, LabelSet};
use crate::error::{Error, Result};
use crate::numerics::{dot, softmax, Matrix};
use crate::transformer::{argmax, Example, ToyTransformer};

/// Explanation size used unless configured otherwise.
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedConcept {
    pub id: ConceptId,
    pub text: String,
    pub key: f64,
    /// Cosine between the input and concept encoder embeddings.
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackFields {
    pub attacked_class: String,
    pub pre_similarity: f64,
    pub post_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub input_id: usize,
    pub text: String,
    pub predicted_class: String,
    pub concepts: Vec<ExplainedConcept>,
    /// `k` exceeded the number of concepts of the predicted class.
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attack: Option<AttackFields>,
}

impl ExplanationReport {
    /// Mean input-concept cosine over the listed concepts.
    pub fn mean_cosine(&self) -> f64 {
        if self.concepts.is_empty() {
            0.0
        } else {
            self.concepts.iter().map(|c| c.cosine).sum::<f64>() / self.concepts.len() as f64
        }
    }
}

/// Columns of `class` sorted by key descending, ties to the smaller id.
pub fn ranked_class_columns(dec: &Decomposition, class: usize) -> Vec<usize> {
    let keys = concept_keys(dec);
    let mut cols = dec.class_columns(class);
    cols.sort_by(|&a, &b| {
        keys[b]
            .total_cmp(&keys[a])
            .then(dec.concept_ids[a].cmp(&dec.concept_ids[b]))
    });
    cols
}

/// Shared inputs for explanations and attacks.
pub struct Explainer<'a> {
    pub model: &'a ToyTransformer,
    pub labels: &'a LabelSet,
    pub basis: &'a ConceptBasis,
    pub encoder: &'a Encoder,
}

impl Explainer<'_> {
    fn check(&self, dec: &Decomposition) -> Result<()> {
        if dec.concept_ids != self.basis.ids {
            return Err(Error::InvalidInput(
                "decomposition columns do not match the concept basis".into(),
            ));
        }
        Ok(())
    }

    fn concepts(&self, dec: &Decomposition, cols: &[usize], input_emb: &[f64]) -> Result<Vec<ExplainedConcept>> {
        let keys = concept_keys(dec);
        cols.iter()
            .map(|&c| {
                let e = self.encoder.embed(&self.basis.texts[c])?;
                Ok(ExplainedConcept {
                    id: dec.concept_ids[c],
                    text: self.basis.texts[c].clone(),
                    key: keys[c],
                    cosine: dot(input_emb, &e),
                })
            })
            .collect()
    }

    /// Top-`k` concepts of the class predicted with prompt `CQ`.
    pub fn explain(
        &self,
        dec: &Decomposition,
        input_id: usize,
        text: &str,
        example: &Example,
        k: usize,
    ) -> Result<ExplanationReport> {
        self.check(dec)?;
        let pc = self.model.prompt_cache(&dec.prompt())?;
        let y = argmax(&self.model.logits(&pc, example));
        let ranked = ranked_class_columns(dec, y);
        let truncated = k > ranked.len();
        if truncated {
            log::warn!(
                "input {input_id}: asked for {k} concepts but class {} has {}",
                self.labels.name(y),
                ranked.len()
            );
        }
        let top = &ranked[..k.min(ranked.len())];
        let input_emb = self.encoder.embed(text)?;
        Ok(ExplanationReport {
            input_id,
            text: text.to_string(),
            predicted_class: self.labels.name(y).to_string(),
            concepts: self.concepts(dec, top, &input_emb)?,
            truncated,
            attack: None,
        })
    }
}

/// How the attacked class is chosen for a bad case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YPrimeRule {
    /// Second most probable class under `CQ`.
    RunnerUp,
    /// The gold label (which differs from the prediction for a bad case).
    GoldLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackCase {
    pub input_id: usize,
    pub gold_class: String,
    pub predicted_class: String,
    pub attacked_class: String,
    /// Class predicted with the rebuilt prompt.
    pub post_prediction: String,
    pub pre_similarity: f64,
    pub post_similarity: f64,
    pub pre_concepts: Vec<ConceptId>,
    pub post_concepts: Vec<ConceptId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub cases: Vec<AttackCase>,
    pub mean_pre: f64,
    pub mean_post: f64,
    /// `mean_post - mean_pre`.
    pub delta: f64,
}

/// Result of [`Explainer::causal_attack`]; no misclassified inputs is a
/// valid outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AttackOutcome {
    EmptyReport,
    Report(AttackReport),
}

/// A candidate input for the attack: id, raw text and prepared example.
pub struct AttackInput<'a> {
    pub id: usize,
    pub text: &'a str,
    pub example: &'a Example,
}

impl Explainer<'_> {
    /// Prompt built from a subset of columns: `C[:, cols] Q[cols, :]`.
    fn sub_prompt(dec: &Decomposition, cols: &[usize]) -> Matrix {
        dec.c.select_cols(cols).mul_unchecked(&dec.q.select_rows(cols))
    }

    /// Swaps the explanation of every misclassified input for the top
    /// concepts of another class and compares input-explanation cosines.
    pub fn causal_attack(
        &self,
        dec: &Decomposition,
        inputs: &[AttackInput],
        rule: YPrimeRule,
        k: usize,
    ) -> Result<AttackOutcome> {
        self.check(dec)?;
        let pc = self.model.prompt_cache(&dec.prompt())?;
        let mut cases = Vec::new();
        for inp in inputs {
            let probs = softmax(&self.model.logits(&pc, inp.example), 1.0);
            let y = argmax(&probs);
            if y == inp.example.label {
                continue;
            }
            let y_prime = match rule {
                YPrimeRule::GoldLabel => inp.example.label,
                YPrimeRule::RunnerUp => runner_up(&probs, y),
            };
            cases.push(self.attack_one(dec, inp, y, y_prime, k)?);
        }
        if cases.is_empty() {
            return Ok(AttackOutcome::EmptyReport);
        }
        let n = cases.len() as f64;
        let mean_pre = cases.iter().map(|c| c.pre_similarity).sum::<f64>() / n;
        let mean_post = cases.iter().map(|c| c.post_similarity).sum::<f64>() / n;
        Ok(AttackOutcome::Report(AttackReport {
            cases,
            mean_pre,
            mean_post,
            delta: mean_post - mean_pre,
        }))
    }

    /// Attacks one input predicted as `y` toward `y_prime`.
    pub fn attack_one(
        &self,
        dec: &Decomposition,
        inp: &AttackInput,
        y: usize,
        y_prime: usize,
        k: usize,
    ) -> Result<AttackCase> {
        let input_emb = self.encoder.embed(inp.text)?;
        let pre_cols: Vec<usize> = ranked_class_columns(dec, y).into_iter().take(k).collect();
        let post_cols: Vec<usize> = ranked_class_columns(dec, y_prime).into_iter().take(k).collect();
        let pre = self.concepts(dec, &pre_cols, &input_emb)?;
        let post = self.concepts(dec, &post_cols, &input_emb)?;
        let mean = |v: &[ExplainedConcept]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().map(|c| c.cosine).sum::<f64>() / v.len() as f64
            }
        };
        let post_prediction = if post_cols.is_empty() {
            y
        } else {
            let attacked = self.model.prompt_cache(&Self::sub_prompt(dec, &post_cols))?;
            argmax(&self.model.logits(&attacked, inp.example))
        };
        Ok(AttackCase {
            input_id: inp.id,
            gold_class: self.labels.name(inp.example.label).to_string(),
            predicted_class: self.labels.name(y).to_string(),
            attacked_class: self.labels.name(y_prime).to_string(),
            post_prediction: self.labels.name(post_prediction).to_string(),
            pre_similarity: mean(&pre),
            post_similarity: mean(&post),
            pre_concepts: pre.iter().map(|c| c.id).collect(),
            post_concepts: post.iter().map(|c| c.id).collect(),
        })
    }
}

fn runner_up(probs: &[f64], top: usize) -> usize {
    let mut best: Option<usize> = None;
    for (i, &p) in probs.iter().enumerate() {
        if i != top && best.is_none_or(|b| p > probs[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or(top)
}

pub fn write_explanations(path: impl AsRef<Path>, reports: &[ExplanationReport]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    f.write_all(&out).map_err(|e| Error::file(path, e))
}

pub fn read_explanations(path: impl AsRef<Path>) -> Result<Vec<ExplanationReport>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
