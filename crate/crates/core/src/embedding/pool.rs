use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::LabelSet;
use super::encoder::Encoder;
use crate::error::{Error, Result};

pub type ConceptId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct ConceptCandidate {
    pub id: ConceptId,
    pub class_label: String,
    pub text: String,
    /// Unit-norm, filled by [`CandidatePool::embed_all`].
    pub embedding: Option<Vec<f64>>,
}

/// One line of a concept file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub id: ConceptId,
    pub class: String,
    pub text: String,
}

/// The candidate set `S`, partitioned per class into `S_y`.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    labels: LabelSet,
    /// Sorted by id.
    candidates: Vec<ConceptCandidate>,
}

impl CandidatePool {
    pub fn new(labels: LabelSet, mut candidates: Vec<ConceptCandidate>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &candidates {
            if labels.index_of(&c.class_label).is_none() {
                return Err(Error::InvalidInput(format!(
                    "candidate {} has unknown class {:?}",
                    c.id, c.class_label
                )));
            }
            if c.text.trim().is_empty() {
                return Err(Error::InvalidInput(format!("candidate {} has empty text", c.id)));
            }
            if !seen.insert(c.id) {
                return Err(Error::InvalidInput(format!("duplicate candidate id {}", c.id)));
            }
        }
        candidates.sort_by_key(|c| c.id);
        Ok(CandidatePool { labels, candidates })
    }

    pub fn from_records(labels: LabelSet, records: Vec<ConceptRecord>) -> Result<Self> {
        let cands = records
            .into_iter()
            .map(|r| ConceptCandidate {
                id: r.id,
                class_label: r.class,
                text: r.text,
                embedding: None,
            })
            .collect();
        Self::new(labels, cands)
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[ConceptCandidate] {
        &self.candidates
    }

    pub fn get(&self, id: ConceptId) -> Option<&ConceptCandidate> {
        self.candidates
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.candidates[i])
    }

    /// `S_y`, ordered by id.
    pub fn class_members(&self, class: &str) -> Vec<&ConceptCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.class_label == class)
            .collect()
    }

    pub fn embed_all(&mut self, encoder: &Encoder) -> Result<()> {
        for c in self.candidates.iter_mut() {
            if c.embedding.is_none() {
                c.embedding = Some(encoder.embed(&c.text)?);
            }
        }
        Ok(())
    }

    pub fn records(&self) -> Vec<ConceptRecord> {
        self.candidates
            .iter()
            .map(|c| ConceptRecord {
                id: c.id,
                class: c.class_label.clone(),
                text: c.text.clone(),
            })
            .collect()
    }
}

pub fn read_concepts(path: impl AsRef<Path>) -> Result<Vec<ConceptRecord>> {
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

pub fn write_concepts(path: impl AsRef<Path>, records: &[ConceptRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::file(path, e))
}
