use std::fs;
use std::path::Path;

use cd_core::embedding::{tokenize, LabelSet, LabeledText};
use cd_core::transformer::{Example, ToyTransformer};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::config::Shots;
use crate::error::{CliError, CliResult};

/// Indices into the training file for one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Stratified split: each class is shuffled with the seed, the first
/// `val_fraction` of it (at least one item when the class has two or more)
/// is held out, and `shots` items of the rest are kept for training.
pub fn split(data: &[LabeledText], labels: &LabelSet, shots: Shots, val_fraction: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_4f54);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in labels.names() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| &data[i].label == class).collect();
        idx.shuffle(&mut rng);
        let mut n_val = (idx.len() as f64 * val_fraction).round() as usize;
        if val_fraction > 0.0 && idx.len() > 1 {
            n_val = n_val.clamp(1, idx.len() - 1);
        }
        let (v, rest) = idx.split_at(n_val);
        val.extend_from_slice(v);
        let keep = match shots {
            Shots::Full => rest.len(),
            Shots::PerClass(n) => n.min(rest.len()),
        };
        train.extend_from_slice(&rest[..keep]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Split { train, val }
}

pub fn examples(model: &ToyTransformer, labels: &LabelSet, data: &[LabeledText], idx: &[usize]) -> CliResult<Vec<Example>> {
    idx.iter()
        .map(|&i| {
            let t = &data[i];
            Ok(model.prepare_text(&t.text, labels.require(&t.label)?)?)
        })
        .collect()
}

pub fn all_examples(model: &ToyTransformer, labels: &LabelSet, data: &[LabeledText]) -> CliResult<Vec<Example>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    examples(model, labels, data, &idx)
}

/// Distinct tokens of `data` in first-appearance order.
pub fn vocabulary(data: &[LabeledText]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for t in data {
        for tok in tokenize(&t.text) {
            if seen.insert(tok.clone()) {
                out.push(tok);
            }
        }
    }
    out
}

#[derive(Deserialize)]
struct PretrainLine {
    text: String,
    labels: Vec<usize>,
}

/// Reads the backbone corpus: JSON lines of `{"text", "labels"}`, one class
/// index per task.
pub fn read_pretrain(path: &Path, num_classes: usize) -> CliResult<Vec<(String, Vec<usize>)>> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut tasks = None;
    for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| CliError::validation(format!("{}:{}: {m}", path.display(), i + 1));
        let rec: PretrainLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.labels.is_empty() || rec.labels.iter().any(|&l| l >= num_classes) {
            return Err(bad(format!("labels must be non-empty class indices below {num_classes}")));
        }
        if *tasks.get_or_insert(rec.labels.len()) != rec.labels.len() {
            return Err(bad("every line needs the same number of labels".into()));
        }
        out.push((rec.text, rec.labels));
    }
    if out.is_empty() {
        return Err(CliError::validation(format!("{} has no texts", path.display())));
    }
    Ok(out)
}
