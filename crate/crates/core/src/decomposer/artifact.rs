//! Decomposition artifacts: `decomposition.json` plus `C.cdem` and `Q.cdem`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::{Decomposition, Provenance};
use crate::embedding::{load_embeddings, save_embeddings, ConceptId};
use crate::error::{Error, Result};

pub const DECOMPOSITION_FILE: &str = "decomposition.json";
pub const C_FILE: &str = "C.cdem";
pub const Q_FILE: &str = "Q.cdem";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionManifest {
    pub concept_ids: Vec<ConceptId>,
    pub concept_classes: Vec<usize>,
    pub provenance: Provenance,
    pub mu: Option<f64>,
    pub seed: Option<u64>,
    pub c_file: String,
    pub q_file: String,
}

/// Writes the manifest and both tensors into `dir`. Tensors are stored as
/// `f32`, so a reloaded decomposition matches to single precision.
pub fn save_decomposition(dir: impl AsRef<Path>, dec: &Decomposition, mu: Option<f64>, seed: Option<u64>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    save_embeddings(dir.join(C_FILE), &dec.c)?;
    save_embeddings(dir.join(Q_FILE), &dec.q)?;
    let manifest = DecompositionManifest {
        concept_ids: dec.concept_ids.clone(),
        concept_classes: dec.concept_classes.clone(),
        provenance: dec.provenance,
        mu,
        seed,
        c_file: C_FILE.into(),
        q_file: Q_FILE.into(),
    };
    let path = dir.join(DECOMPOSITION_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::file(&path, e))
}

pub fn load_decomposition(dir: impl AsRef<Path>) -> Result<(Decomposition, DecompositionManifest)> {
    let dir = dir.as_ref();
    let path = dir.join(DECOMPOSITION_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
    let m: DecompositionManifest = serde_json::from_str(&text)?;
    let c = load_embeddings(dir.join(&m.c_file))?;
    let q = load_embeddings(dir.join(&m.q_file))?;
    let dec = Decomposition::new(c, q, m.concept_ids.clone(), m.concept_classes.clone(), m.provenance)?;
    Ok((dec, m))
}
