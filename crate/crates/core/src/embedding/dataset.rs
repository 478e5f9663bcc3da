use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use crate::error::{Error, Result};
use crate::numerics::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: String,
}

impl LabeledText {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledText {
            text: text.into(),
            label: label.into(),
        }
    }
}

/// The ordered class set `Y`. Class indices follow this order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidInput("label set is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::InvalidInput(format!("duplicate label {n:?}")));
            }
        }
        Ok(LabelSet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::InvalidInput(format!("unknown label {label:?}")))
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: Option<String>,
    label: Option<String>,
}

/// Reads a JSON-lines dataset (`{"text": .., "label": ..}` per line).
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn load_dataset(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Vec<LabeledText>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let text = rec.text.ok_or_else(|| parse_err("missing field \"text\"".into()))?;
        let label = rec.label.ok_or_else(|| parse_err("missing field \"label\"".into()))?;
        let schema_err = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        if labels.index_of(&label).is_none() {
            return Err(schema_err(format!("unknown label {label:?}")));
        }
        if text.trim().is_empty() {
            return Err(schema_err("empty text".into()));
        }
        out.push(LabeledText { text, label });
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &[LabeledText]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for d in data {
        serde_json::to_writer(&mut buf, d)?;
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::file(path, e))
}

/// Normalized mean embedding of the texts labeled `class`.
pub fn mean_class_embedding(encoder: &Encoder, texts: &[LabeledText], class: &str) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; encoder.dim()];
    let mut n = 0usize;
    for t in texts.iter().filter(|t| t.label == class) {
        for (a, b) in acc.iter_mut().zip(encoder.embed(&t.text)?) {
            *a += b;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyClass(class.to_string()));
    }
    for a in acc.iter_mut() {
        *a /= n as f64;
    }
    normalize(&mut acc)?;
    Ok(acc)
}
