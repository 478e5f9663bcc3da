//! Model checkpoints: a `manifest.json` next to one CDEM file per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{HeadWeights, ToyTransformer};
use crate::embedding::{load_embeddings, save_embeddings};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_model(dir: impl AsRef<Path>, model: &ToyTransformer) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut tensors = Vec::new();
    for (name, t) in model.tensors() {
        let file = format!("{name}.cdem");
        save_embeddings(dir.join(&file), t)?;
        tensors.push(TensorEntry {
            name,
            file,
            rows: t.rows(),
            cols: t.cols(),
        });
    }
    let manifest = ModelManifest {
        config: model.config().clone(),
        tensors,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::file(&path, e))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<ToyTransformer> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;
    let get = |name: &str| -> Result<Matrix> {
        let entry = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor {name}")))?;
        let m = load_embeddings(dir.join(&entry.file))?;
        if m.shape() != (entry.rows, entry.cols) {
            return Err(Error::Format(format!(
                "tensor {name} is {:?}, manifest says {:?}",
                m.shape(),
                (entry.rows, entry.cols)
            )));
        }
        Ok(m)
    };
    let embeddings = get("embeddings")?;
    let mut heads = Vec::new();
    for i in 0..manifest.config.heads {
        heads.push(HeadWeights {
            w_q: get(&format!("head{i}.w_q"))?,
            w_k: get(&format!("head{i}.w_k"))?,
            w_v: get(&format!("head{i}.w_v"))?,
            w_o: get(&format!("head{i}.w_o"))?,
        });
    }
    let w1 = get("w1")?;
    let w2 = get("w2")?;
    let classifier = get("classifier")?;
    ToyTransformer::from_parts(manifest.config.clone(), embeddings, heads, w1, w2, classifier)
}
